//! Lattice random-walk Monte Carlo of the mixed walk, used as an
//! independent check on the closed-form results.
//!
//! Each step of length `tau = delta^2 / (4D)` a walker rests with
//! probability `s`; otherwise it moves `v tau` toward the goal with
//! probability `p` or takes one of the four lattice steps `+-delta` with
//! probability `q/4` each. Walls mirror any overshoot. The goal wall either
//! absorbs or mirrors.
//!
//! Every walker draws from its own generator seeded from
//! `(seed, stream, walker index)`, and per-walker results are reduced in
//! index order, so results do not depend on the number of threads.

use std::collections::BTreeMap;

use rand::RngCore;
use rand::SeedableRng;
use rand_distr::{Binomial, Distribution};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::GridSpec;
use crate::error::{Error, Result};
use crate::model::{EnclosureGeometry, MovementParams, SpeciesEnsemble};

/// Walker positions within this fraction of a lattice step of the goal
/// count as arrived, so that round-off in repeated additions cannot delay
/// an arrival by a whole step.
const GOAL_SLACK: f64 = 1e-9;

const TWO_POW_32: f64 = 4294967296.0;

/// Walkers advanced together in the reflecting-walls x loop.
const LANES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// Directed moves of `v tau` mixed with unbiased lattice steps.
    Mixed,
    /// Lattice steps only, biased toward the goal (`east` with probability
    /// `p + q/4`, the other three `q/4`). Needs `v tau = delta`.
    Biased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    AbsorbingGoal,
    AllReflecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub delta: f64,
    pub walkers: u64,
    pub seed: u64,
    pub mode: WalkMode,
    pub boundary: Boundary,
    /// Walkers not absorbed by this (wall-clock) time are censored.
    pub t_max: f64,
    /// Worker threads; `None` uses the global pool. Never changes results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(delta: f64, walkers: u64, seed: u64) -> Self {
        Self { delta, walkers, seed, mode: WalkMode::Mixed, boundary: Boundary::AbsorbingGoal, t_max: f64::INFINITY, threads: None }
    }

    /// `delta^2 / (4D)`.
    pub fn step_tau(&self, params: &MovementParams) -> Result<f64> {
        if !(params.d() > 0.0) {
            return Err(Error::InvalidConfig("step length tau = delta^2/(4D) needs D > 0".into()));
        }
        Ok(self.delta * self.delta / (4.0 * params.d()))
    }

    /// Resolution advice that does not block a run.
    pub fn warnings(&self, geom: &EnclosureGeometry) -> Vec<String> {
        let mut w = Vec::new();
        if self.delta > geom.a / 100.0 {
            w.push(format!("delta = {} exceeds a/100 = {}; lattice effects may be visible", self.delta, geom.a / 100.0));
        }
        if self.delta > geom.b / 20.0 {
            w.push(format!("delta = {} exceeds b/20 = {}; lattice effects may be visible", self.delta, geom.b / 20.0));
        }
        w
    }

    fn validate(&self, params: &MovementParams, geom: &EnclosureGeometry) -> Result<f64> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be positive (got {})", self.delta)));
        }
        if self.walkers == 0 {
            return Err(Error::InvalidConfig("walkers must be at least 1".into()));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidConfig(format!("t_max must be positive (got {})", self.t_max)));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        let tau = self.step_tau(params)?;
        if self.delta > geom.a.min(geom.b) {
            return Err(Error::InvalidConfig(format!("delta = {} is larger than the enclosure", self.delta)));
        }
        let jump = params.v() * tau;
        if self.mode == WalkMode::Mixed && jump > geom.a {
            return Err(Error::InvalidConfig(format!("directed step v*tau = {jump} is larger than a")));
        }
        if self.mode == WalkMode::Biased && params.p() > 0.0 && (jump - self.delta).abs() > 1e-9 * self.delta {
            return Err(Error::InvalidConfig(format!(
                "biased walk needs v*tau = delta, i.e. delta = 4D/v = {} (got v*tau = {jump})",
                4.0 * params.d() / params.v()
            )));
        }
        Ok(tau)
    }

    fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one walker.
pub fn walker_rng(seed: u64, stream: u64, walker: u64) -> Xoshiro256PlusPlus {
    let key = splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ walker);
    Xoshiro256PlusPlus::seed_from_u64(key)
}

/// Probability as a threshold on a uniform `u32`.
fn threshold(prob: f64) -> u64 {
    (prob.clamp(0.0, 1.0) * TWO_POW_32).round() as u64
}

/// Move categories of one step, as cumulative thresholds on a `u32`.
#[derive(Debug, Clone, Copy)]
struct Categories {
    rest: u64,
    directed: u64,
    east: u64,
    west: u64,
    north: u64,
}

impl Categories {
    /// Full two-dimensional step distribution.
    fn full(params: &MovementParams, mode: WalkMode) -> Self {
        let (s, p, q) = (params.s(), params.p(), params.q());
        let act = 1.0 - s;
        let (dir, east) = match mode {
            WalkMode::Mixed => (act * p, act * q / 4.0),
            WalkMode::Biased => (0.0, act * (p + q / 4.0)),
        };
        let side = act * q / 4.0;
        let c1 = s;
        let c2 = c1 + dir;
        let c3 = c2 + east;
        let c4 = c3 + side;
        let c5 = c4 + side;
        Self { rest: threshold(c1), directed: threshold(c2), east: threshold(c3), west: threshold(c4), north: threshold(c5) }
    }

    /// Distribution of a step given that it is not a north/south move.
    fn x_given_no_y(params: &MovementParams, mode: WalkMode) -> Self {
        let (s, p, q) = (params.s(), params.p(), params.q());
        let act = 1.0 - s;
        let keep = 1.0 - act * q / 2.0;
        let (dir, east) = match mode {
            WalkMode::Mixed => (act * p, act * q / 4.0),
            WalkMode::Biased => (0.0, act * (p + q / 4.0)),
        };
        let c1 = s / keep;
        let c2 = c1 + dir / keep;
        let c3 = c2 + east / keep;
        Self { rest: threshold(c1), directed: threshold(c2), east: threshold(c3), west: 1 << 32, north: 1 << 32 }
    }

    #[inline(always)]
    fn x_index(&self, r: u32) -> usize {
        let r = r as u64;
        (r >= self.rest) as usize + (r >= self.directed) as usize + (r >= self.east) as usize + (r >= self.west) as usize
    }
}

/// Precomputed single-step kernel for one species in one enclosure.
#[derive(Debug, Clone)]
pub struct Stepper {
    cats: Categories,
    x_cats: Categories,
    tau: f64,
    jump: f64,
    delta: f64,
    geom: EnclosureGeometry,
    boundary: Boundary,
    y_prob: f64,
    x_moves: [f64; 4],
}

/// Result of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub x: f64,
    pub y: f64,
    /// Fraction of the step elapsed when the goal was reached, if it was.
    pub absorbed_at: Option<f64>,
}

impl Stepper {
    pub fn new(params: &MovementParams, geom: &EnclosureGeometry, cfg: &SimConfig) -> Result<Self> {
        let tau = cfg.validate(params, geom)?;
        let jump = match cfg.mode {
            WalkMode::Mixed => params.v() * tau,
            WalkMode::Biased => cfg.delta,
        };
        Ok(Self {
            cats: Categories::full(params, cfg.mode),
            x_cats: Categories::x_given_no_y(params, cfg.mode),
            tau,
            jump,
            delta: cfg.delta,
            geom: *geom,
            boundary: cfg.boundary,
            y_prob: (1.0 - params.s()) * params.q() / 2.0,
            x_moves: [0.0, jump, cfg.delta, -cfg.delta],
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn goal(&self) -> f64 {
        self.geom.a - GOAL_SLACK * self.delta
    }

    fn fold_x(&self, x: f64) -> f64 {
        let x = x.abs();
        if x > self.geom.a {
            2.0 * self.geom.a - x
        } else {
            x
        }
    }

    fn fold_y(&self, y: f64) -> f64 {
        let h = 0.5 * self.geom.b;
        if y > h {
            self.geom.b - y
        } else if y < -h {
            -self.geom.b - y
        } else {
            y
        }
    }

    /// One full two-dimensional step from `(x, y)`.
    pub fn step<R: RngCore>(&self, x: f64, y: f64, rng: &mut R) -> StepOutcome {
        let r = rng.next_u32() as u64;
        let c = &self.cats;
        let (mut nx, mut ny) = (x, y);
        let mut directed = false;
        if r < c.rest {
        } else if r < c.directed {
            nx += self.jump;
            directed = true;
        } else if r < c.east {
            nx += self.delta;
        } else if r < c.west {
            nx -= self.delta;
        } else if r < c.north {
            ny += self.delta;
        } else {
            ny -= self.delta;
        }
        if self.boundary == Boundary::AbsorbingGoal && nx >= self.goal() {
            let frac = if directed { ((self.geom.a - x) / self.jump).clamp(0.0, 1.0) } else { 1.0 };
            return StepOutcome { x: self.geom.a, y: self.fold_y(ny), absorbed_at: Some(frac) };
        }
        StepOutcome { x: self.fold_x(nx), y: self.fold_y(ny), absorbed_at: None }
    }

    /// Wall-clock arrival time from `x0`, or `None` if not absorbed within
    /// `max_steps`. Only the x-coordinate matters for arrival.
    fn arrival_time<R: RngCore>(&self, x0: f64, max_steps: u64, rng: &mut R) -> Option<f64> {
        let goal = self.goal();
        if x0 >= goal {
            return Some(0.0);
        }
        let table = [0.0, self.jump, self.delta, -self.delta, 0.0];
        let c = &self.cats;
        let mut x = x0;
        let mut n: u64 = 0;
        while n < max_steps {
            let word = rng.next_u64();
            for r in [word as u32, (word >> 32) as u32] {
                let idx = c.x_index(r);
                let old = x;
                x += table[idx];
                n += 1;
                if x >= goal {
                    let frac = if idx == 1 { ((self.geom.a - old) / self.jump).clamp(0.0, 1.0) } else { 1.0 };
                    return Some((n as f64 - 1.0 + frac) * self.tau);
                }
                x = x.abs();
                if n == max_steps {
                    break;
                }
            }
        }
        None
    }

    /// Position after `n` steps in an enclosure with all walls reflecting.
    ///
    /// The number of north/south moves is drawn at once; because those
    /// moves are symmetric, folding their free sum once gives the same law
    /// as reflecting step by step. The x-moves are then walked one by one.
    fn position_after<R: RngCore>(&self, n: u64, rng: &mut R) -> (f64, f64) {
        let (y, left) = self.y_after(n, rng);
        (self.walk_x(self.geom.x0, left, rng), y)
    }

    /// Folded ordinate after `n` steps and the number of steps left for x.
    fn y_after<R: RngCore>(&self, n: u64, rng: &mut R) -> (f64, u64) {
        let m_y = if self.y_prob > 0.0 { Binomial::new(n, self.y_prob).expect("valid binomial").sample(rng) } else { 0 };
        let north = if m_y > 0 { Binomial::new(m_y, 0.5).expect("valid binomial").sample(rng) } else { 0 };
        let y = fold_periodic(self.geom.y0 + self.delta * (2.0 * north as f64 - m_y as f64), self.geom.b);
        (y, n - m_y)
    }

    #[inline(always)]
    fn x_move(&self, x: f64, r: u32) -> f64 {
        let c = &self.x_cats;
        let r = r as u64;
        let idx = (r >= c.rest) as usize + (r >= c.directed) as usize + (r >= c.east) as usize;
        let x = (x + self.x_moves[idx]).abs();
        // equals the mirror image 2a - x exactly when x > a; min avoids a
        // poorly predicted branch next to the goal wall
        x.min(2.0 * self.geom.a - x)
    }

    /// `left` x-moves from `x`, two per drawn word. The upper half of the
    /// last word is discarded when `left` is odd.
    fn walk_x<R: RngCore>(&self, mut x: f64, mut left: u64, rng: &mut R) -> f64 {
        while left > 0 {
            let word = rng.next_u64();
            x = self.x_move(x, word as u32);
            if left > 1 {
                x = self.x_move(x, (word >> 32) as u32);
            }
            left = left.saturating_sub(2);
        }
        x
    }

    /// [`Self::position_after`] for several walkers at once. Each walker
    /// draws from its own generator in the same order as alone, so the
    /// results are identical; interleaving only hides step latency.
    fn positions_after<R: RngCore, const L: usize>(&self, n: u64, rngs: &mut [R; L]) -> [(f64, f64); L] {
        let mut ys = [0.0; L];
        let mut left = [0u64; L];
        for l in 0..L {
            (ys[l], left[l]) = self.y_after(n, &mut rngs[l]);
        }
        let mut xs = [self.geom.x0; L];
        let rounds = left.iter().min().copied().unwrap_or(0) / 2;
        for _ in 0..rounds {
            for l in 0..L {
                let word = rngs[l].next_u64();
                xs[l] = self.x_move(self.x_move(xs[l], word as u32), (word >> 32) as u32);
            }
        }
        std::array::from_fn(|l| (self.walk_x(xs[l], left[l] - 2 * rounds, &mut rngs[l]), ys[l]))
    }
}

/// Reflects `y` into `[-b/2, b/2]` through any number of wall bounces.
fn fold_periodic(y: f64, b: f64) -> f64 {
    let u = (y + 0.5 * b).rem_euclid(2.0 * b);
    let u = if u > b { 2.0 * b - u } else { u };
    u - 0.5 * b
}

/// One step of the walk from `state`.
pub fn step_walker<R: RngCore>(
    state: (f64, f64),
    params: &MovementParams,
    geom: &EnclosureGeometry,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    geom.check_inside(state.0, state.1)?;
    Ok(Stepper::new(params, geom, cfg)?.step(state.0, state.1, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfptStats {
    /// Mean wall-clock arrival time over walkers that arrived.
    pub mean: f64,
    /// `mean * (1 - s)`: the mean time spent moving.
    pub mean_active: f64,
    /// Sample standard deviation over `sqrt(n_effective)`.
    pub std_error: f64,
    pub median: f64,
    pub n_effective: u64,
    pub censored: u64,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub grid: GridSpec,
    /// Time of the recorded step, the first step time at or after the
    /// requested snapshot.
    pub t: f64,
    pub steps: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Walker counts per cell, `counts[ix * ny + iy]`.
    pub counts: Vec<u64>,
    pub total: u64,
    /// Counts over walkers and cell area.
    pub density: Vec<f64>,
    /// Multinomial standard error of `density`.
    pub density_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceSim {
    pub times: Vec<f64>,
    pub species: Vec<String>,
    pub walkers: u64,
    /// `[species][time]` fraction arrived by each time.
    pub arrival_cdf: Vec<Vec<f64>>,
    /// `[species][time]` fraction of races in which the species arrived by
    /// the time and in first (second, third) place.
    pub first_place: Vec<Vec<f64>>,
    pub second_place: Vec<Vec<f64>>,
    pub third_place: Vec<Vec<f64>>,
    pub censored: Vec<u64>,
    /// Tally of arrival orders over all races, e.g. `"a>b"` when species
    /// `a` arrived before `b` and no one else arrived by `t_max`.
    pub order_counts: BTreeMap<String, u64>,
}

/// Binomial standard error of an empirical frequency.
pub fn binomial_se(freq: f64, n: u64) -> f64 {
    (freq * (1.0 - freq) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub walkers: u64,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mfpt: Option<MfptStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub race: Option<RaceSim>,
}

fn max_steps(t_max: f64, tau: f64) -> u64 {
    if t_max.is_finite() {
        (t_max / tau).floor() as u64
    } else {
        u64::MAX
    }
}

fn arrival_times(stepper: &Stepper, cfg: &SimConfig, x0: f64, stream: u64) -> Vec<Option<f64>> {
    let cap = max_steps(cfg.t_max, stepper.tau);
    (0..cfg.walkers).into_par_iter().map(|w| stepper.arrival_time(x0, cap, &mut walker_rng(cfg.seed, stream, w))).collect()
}

fn summarize(times: &[Option<f64>], s: f64) -> MfptStats {
    let mut done: Vec<f64> = times.iter().flatten().copied().collect();
    let n = done.len() as u64;
    let censored = times.len() as u64 - n;
    let mean = done.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { done.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    done.sort_by(f64::total_cmp);
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        done[(n / 2) as usize]
    } else {
        0.5 * (done[(n / 2 - 1) as usize] + done[(n / 2) as usize])
    };
    MfptStats {
        mean,
        mean_active: mean * (1.0 - s),
        std_error: (var / n as f64).sqrt(),
        median,
        n_effective: n,
        censored,
        censored_fraction: censored as f64 / times.len() as f64,
    }
}

/// Mean first-arrival time at the goal from `(x0, y0)`.
pub fn simulate_mfpt(params: &MovementParams, geom: &EnclosureGeometry, cfg: &SimConfig) -> Result<SimResult> {
    if cfg.boundary != Boundary::AbsorbingGoal {
        return Err(Error::InvalidConfig("arrival times need an absorbing goal".into()));
    }
    let stepper = Stepper::new(params, geom, cfg)?;
    let times = cfg.run(|| arrival_times(&stepper, cfg, geom.x0, 0))?;
    Ok(SimResult { walkers: cfg.walkers, tau: stepper.tau, mfpt: Some(summarize(&times, params.s())), histogram: None, race: None })
}

/// Walker positions after `steps` steps with all walls reflecting.
pub fn sample_positions(params: &MovementParams, geom: &EnclosureGeometry, cfg: &SimConfig, steps: u64) -> Result<Vec<(f64, f64)>> {
    if cfg.boundary != Boundary::AllReflecting {
        return Err(Error::InvalidConfig("occupancy snapshots need all walls reflecting".into()));
    }
    let stepper = Stepper::new(params, geom, cfg)?;
    cfg.run(|| {
        (0..cfg.walkers.div_ceil(LANES as u64))
            .into_par_iter()
            .flat_map_iter(|chunk| {
                let w0 = chunk * LANES as u64;
                let out: Vec<(f64, f64)> = if w0 + LANES as u64 <= cfg.walkers {
                    let mut rngs = std::array::from_fn::<_, LANES, _>(|l| walker_rng(cfg.seed, 0, w0 + l as u64));
                    stepper.positions_after(steps, &mut rngs).to_vec()
                } else {
                    (w0..cfg.walkers).map(|w| stepper.position_after(steps, &mut walker_rng(cfg.seed, 0, w))).collect()
                };
                out
            })
            .collect()
    })
}

/// Occupancy histogram at the first step time at or after `t_snapshot`.
pub fn simulate_density(
    params: &MovementParams,
    geom: &EnclosureGeometry,
    cfg: &SimConfig,
    t_snapshot: f64,
    grid: GridSpec,
) -> Result<SimResult> {
    if !(t_snapshot > 0.0 && t_snapshot.is_finite()) {
        return Err(Error::NonPositiveTime(t_snapshot));
    }
    let tau = cfg.step_tau(params)?;
    let steps = (t_snapshot / tau).ceil() as u64;
    let pos = sample_positions(params, geom, cfg, steps)?;
    let mut counts = vec![0u64; grid.nx * grid.ny];
    for &(x, y) in &pos {
        let (ix, iy) = grid.cell_of(geom, x, y).ok_or_else(|| Error::InvalidConfig(format!("walker left the enclosure at ({x}, {y})")))?;
        counts[ix * grid.ny + iy] += 1;
    }
    let n = cfg.walkers as f64;
    let area = grid.cell_area(geom);
    let density = counts.iter().map(|&c| c as f64 / (n * area)).collect();
    let density_se = counts.iter().map(|&c| binomial_se(c as f64 / n, cfg.walkers) / area).collect();
    let total = counts.iter().sum();
    Ok(SimResult {
        walkers: cfg.walkers,
        tau,
        mfpt: None,
        histogram: Some(Histogram {
            grid,
            t: steps as f64 * tau,
            steps,
            x: grid.x_centers(geom),
            y: grid.y_centers(geom),
            counts,
            total,
            density,
            density_se,
        }),
        race: None,
    })
}

/// True arrival order of independent walkers, one per species per race.
/// Race `r` pits walker `r` of every species against each other.
pub fn simulate_race(ensemble: &SpeciesEnsemble, geom: &EnclosureGeometry, cfg: &SimConfig, t_grid: &[f64]) -> Result<SimResult> {
    if cfg.boundary != Boundary::AbsorbingGoal {
        return Err(Error::InvalidConfig("arrival order needs an absorbing goal".into()));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || !(t_grid[0] >= 0.0) {
        return Err(Error::InvalidConfig("time grid must be non-negative and strictly ascending".into()));
    }
    let entries = ensemble.entries();
    let n_sp = entries.len();
    let mut arrivals = Vec::with_capacity(n_sp);
    for (k, s) in entries.iter().enumerate() {
        let stepper = Stepper::new(&s.params, geom, cfg)?;
        arrivals.push(cfg.run(|| arrival_times(&stepper, cfg, geom.x0, k as u64 + 1))?);
    }

    let n_t = t_grid.len();
    // first grid index whose time is at or after the arrival
    let slot = |t: f64| t_grid.partition_point(|&g| g < t);
    let mut cdf_hits = vec![vec![0u64; n_t + 1]; n_sp];
    let mut place_hits = vec![vec![vec![0u64; n_t + 1]; n_sp]; 3];
    let mut order_counts = BTreeMap::new();
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n_sp);
    for r in 0..cfg.walkers as usize {
        order.clear();
        for (k, times) in arrivals.iter().enumerate() {
            if let Some(t) = times[r] {
                order.push((t, k));
                cdf_hits[k][slot(t)] += 1;
            }
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (rank, &(t, k)) in order.iter().enumerate().take(3) {
            place_hits[rank][k][slot(t)] += 1;
        }
        let key = order.iter().map(|&(_, k)| entries[k].name.as_str()).collect::<Vec<_>>().join(">");
        *order_counts.entry(key).or_insert(0) += 1;
    }
    let n = cfg.walkers as f64;
    let cumulative = |hits: &[u64]| {
        let mut acc = 0u64;
        hits[..n_t]
            .iter()
            .map(|&h| {
                acc += h;
                acc as f64 / n
            })
            .collect::<Vec<f64>>()
    };
    let per_species = |table: &Vec<Vec<u64>>| table.iter().map(|h| cumulative(h)).collect::<Vec<_>>();
    let race = RaceSim {
        times: t_grid.to_vec(),
        species: entries.iter().map(|s| s.name.clone()).collect(),
        walkers: cfg.walkers,
        arrival_cdf: per_species(&cdf_hits),
        first_place: per_species(&place_hits[0]),
        second_place: per_species(&place_hits[1]),
        third_place: per_species(&place_hits[2]),
        censored: arrivals.iter().map(|a| a.iter().filter(|t| t.is_none()).count() as u64).collect(),
        order_counts,
    };
    let tau = cfg.step_tau(&entries[0].params)?;
    Ok(SimResult { walkers: cfg.walkers, tau, mfpt: None, histogram: None, race: Some(race) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Species;

    fn params(p: f64, s: f64, v: f64, d: f64) -> MovementParams {
        MovementParams::new(p, s, v, d).unwrap()
    }

    fn geom() -> EnclosureGeometry {
        EnclosureGeometry::new(5.0, 2.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn tau_and_validation() {
        let m = params(0.5, 0.0, 1.0, 1.0);
        let cfg = SimConfig::new(0.1, 10, 1);
        assert_eq!(cfg.step_tau(&m).unwrap(), 0.1 * 0.1 / 4.0);
        let mut bad = cfg;
        bad.walkers = 0;
        assert!(simulate_mfpt(&m, &geom(), &bad).is_err());
        let pure = MovementParams::new(1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(cfg.step_tau(&pure).is_err());
        let mut biased = cfg;
        biased.mode = WalkMode::Biased;
        assert!(Stepper::new(&m, &geom(), &biased).is_err());
        // delta = 4D/v makes v tau = delta
        biased.delta = 0.4;
        assert!(Stepper::new(&params(0.5, 0.0, 1.0, 0.1), &geom(), &biased).is_ok());
        assert_eq!(SimConfig::new(0.15, 1, 1).warnings(&geom()).len(), 2);
        assert_eq!(cfg.warnings(&geom()).len(), 1);
        assert!(SimConfig::new(0.01, 1, 1).warnings(&geom()).is_empty());
    }

    #[test]
    fn thresholds_partition_the_word() {
        let m = params(0.3, 0.2, 1.0, 1.0);
        let c = Categories::full(&m, WalkMode::Mixed);
        assert!(c.rest <= c.directed && c.directed <= c.east && c.east <= c.west && c.west <= c.north);
        assert!(c.north <= 1 << 32);
        let x = Categories::x_given_no_y(&m, WalkMode::Mixed);
        // conditional probabilities of rest, directed, east, west sum to 1
        let keep = 1.0 - 0.8 * 0.7 / 2.0;
        assert_eq!(x.rest, threshold(0.2 / keep));
        assert_eq!(x.east, threshold((0.2 + 0.8 * 0.3 + 0.8 * 0.7 / 4.0) / keep));
    }

    #[test]
    fn always_resting_stays_put() {
        // s < 1 is required, so use the largest resting fraction that
        // saturates the quantized threshold
        let m = params(0.5, 1.0 - 1e-12, 1.0, 1.0);
        let g = geom();
        let cfg = SimConfig::new(0.01, 1, 9);
        let st = Stepper::new(&m, &g, &cfg).unwrap();
        assert_eq!(st.cats.rest, 1 << 32);
        let mut rng = walker_rng(9, 0, 0);
        let (mut x, mut y) = (1.0, 0.3);
        for _ in 0..100_000 {
            let o = st.step(x, y, &mut rng);
            x = o.x;
            y = o.y;
        }
        assert_eq!((x, y), (1.0, 0.3));
    }

    #[test]
    fn pure_advection_is_deterministic() {
        let m = params(1.0, 0.0, 1.0, 1.0);
        let g = geom();
        let cfg = SimConfig::new(0.03, 64, 5);
        let tau = cfg.step_tau(&m).unwrap();
        let st = Stepper::new(&m, &g, &cfg).unwrap();
        let steps = ((5.0 - 1.0) / tau).ceil() as u64;
        let mut rng = walker_rng(5, 0, 0);
        let mut x = 1.0;
        let mut n = 0;
        loop {
            n += 1;
            let o = st.step(x, 0.0, &mut rng);
            if o.absorbed_at.is_some() {
                break;
            }
            x = o.x;
        }
        assert_eq!(n, steps);
        let r = simulate_mfpt(&m, &g, &cfg).unwrap().mfpt.unwrap();
        assert!((r.mean - 4.0).abs() < 1e-9);
        assert!(r.std_error < 1e-9);
    }

    #[test]
    fn single_step_variance() {
        // q = 1: each axis moves +-delta with probability 1/4 each
        let m = params(0.0, 0.0, 0.0, 1.0);
        let g = EnclosureGeometry::new(100.0, 100.0, 50.0, 0.0).unwrap();
        let cfg = SimConfig { boundary: Boundary::AllReflecting, ..SimConfig::new(0.1, 1, 3) };
        let st = Stepper::new(&m, &g, &cfg).unwrap();
        let mut rng = walker_rng(3, 0, 0);
        let n = 1_000_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let o = st.step(50.0, 0.0, &mut rng);
            sx += (o.x - 50.0).powi(2);
            sy += o.y.powi(2);
        }
        let expected = 0.01 / 2.0;
        // variance of the estimator: (d^4/2 - d^4/4)/n per axis
        let se = (0.0001 / 4.0 / n as f64).sqrt();
        assert!((sx / n as f64 - expected).abs() < 4.0 * se);
        assert!((sy / n as f64 - expected).abs() < 4.0 * se);
        assert!((expected - 2.0 * m.d() * st.tau()).abs() < 1e-15);
    }

    #[test]
    fn steps_stay_inside() {
        let m = params(0.4, 0.1, 3.0, 1.0);
        let g = EnclosureGeometry::new(1.0, 0.5, 0.5, 0.0).unwrap();
        let cfg = SimConfig { boundary: Boundary::AllReflecting, ..SimConfig::new(0.05, 1, 11) };
        let st = Stepper::new(&m, &g, &cfg).unwrap();
        let mut rng = walker_rng(11, 0, 0);
        let (mut x, mut y) = (0.5, 0.0);
        for _ in 0..200_000 {
            let o = st.step(x, y, &mut rng);
            assert!(g.contains(o.x, o.y), "({}, {})", o.x, o.y);
            x = o.x;
            y = o.y;
        }
        for i in 0..200 {
            let y = -3.0 + 0.031 * i as f64;
            let f = fold_periodic(y, 0.5);
            assert!(f.abs() <= 0.25 + 1e-15);
        }
        assert!((fold_periodic(0.3, 0.5) - 0.2).abs() < 1e-15);
        assert!((fold_periodic(-0.3, 0.5) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn determinism_across_threads() {
        let m = params(0.5, 0.1, 1.0, 1.0);
        let g = geom();
        let mut cfg = SimConfig::new(0.05, 300, 42);
        cfg.threads = Some(1);
        let a = simulate_mfpt(&m, &g, &cfg).unwrap();
        cfg.threads = Some(3);
        let b = simulate_mfpt(&m, &g, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 43;
        assert_ne!(simulate_mfpt(&m, &g, &cfg).unwrap(), a);
    }

    #[test]
    fn censoring_reported() {
        let m = params(0.0, 0.0, 0.0, 1.0);
        let g = geom();
        let cfg = SimConfig { t_max: 0.5, ..SimConfig::new(0.05, 200, 1) };
        let r = simulate_mfpt(&m, &g, &cfg).unwrap().mfpt.unwrap();
        assert!(r.censored > 190);
        assert_eq!(r.n_effective + r.censored, 200);
    }

    #[test]
    fn one_step_snapshot_is_local() {
        let m = params(0.5, 0.0, 1.0, 1.0);
        let g = EnclosureGeometry::new(2.0, 1.0, 1.0, 0.1).unwrap();
        let cfg = SimConfig { boundary: Boundary::AllReflecting, ..SimConfig::new(0.01, 2000, 8) };
        let pos = sample_positions(&m, &g, &cfg, 1).unwrap();
        for (x, y) in pos {
            assert!((x - 1.0).abs() <= 0.01 + 1e-12 && (y - 0.1).abs() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn race_single_species_first_equals_cdf() {
        let ens = SpeciesEnsemble::new(vec![Species { name: "solo".into(), params: params(0.5, 0.0, 1.0, 1.0), population: 1 }]).unwrap();
        let g = geom();
        let cfg = SimConfig::new(0.05, 500, 2);
        let r = simulate_race(&ens, &g, &cfg, &[1.0, 4.0, 8.0, 20.0]).unwrap().race.unwrap();
        assert_eq!(r.first_place[0], r.arrival_cdf[0]);
        assert!(r.second_place[0].iter().all(|&v| v == 0.0));
        assert!(r.arrival_cdf[0].windows(2).all(|w| w[0] <= w[1]));
    }
}
