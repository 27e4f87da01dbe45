//! Transient and steady-state occupancy density in the enclosure.
//!
//! The density is separable: an x-part made of the free Gaussian with its
//! back-wall image plus the mass `Q(t)` that has reached the goal wall and
//! been redistributed as an exponential profile with rate `h(t)`, times a
//! y-part built from Gaussian images between the two side walls.
//!
//! All times are active (non-resting) time.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EnclosureGeometry, MovementParams};
use crate::numerics::{erf, erfc, find_root_with, image_series_terms, RootOptions};

/// Above this many image pairs the y-part switches to its cosine series,
/// which converges in a handful of terms once the spread exceeds the width.
const MAX_IMAGE_PAIRS: usize = 50;

/// Tolerance used for series truncation when the caller does not pass one.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Cell-centred evaluation grid over `[0, a] x [-b/2, b/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter { field: "grid", reason: format!("needs nx, ny >= 1 (got {nx}x{ny})") });
        }
        Ok(Self { nx, ny })
    }

    pub fn x_centers(&self, geom: &EnclosureGeometry) -> Vec<f64> {
        let dx = geom.a / self.nx as f64;
        (0..self.nx).map(|i| (i as f64 + 0.5) * dx).collect()
    }

    pub fn y_centers(&self, geom: &EnclosureGeometry) -> Vec<f64> {
        let dy = geom.b / self.ny as f64;
        (0..self.ny).map(|j| -0.5 * geom.b + (j as f64 + 0.5) * dy).collect()
    }

    pub fn cell_area(&self, geom: &EnclosureGeometry) -> f64 {
        (geom.a / self.nx as f64) * (geom.b / self.ny as f64)
    }

    /// Cell containing `(x, y)`; points on the far walls go to the last cell.
    pub fn cell_of(&self, geom: &EnclosureGeometry, x: f64, y: f64) -> Option<(usize, usize)> {
        if !geom.contains(x, y) {
            return None;
        }
        let ix = ((x / geom.a * self.nx as f64) as usize).min(self.nx - 1);
        let iy = (((y + 0.5 * geom.b) / geom.b * self.ny as f64) as usize).min(self.ny - 1);
        Some((ix, iy))
    }
}

/// Density sampled at grid cell centres. `values[ix * ny + iy]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub grid: GridSpec,
    /// Snapshot time; `None` for a steady state.
    pub t: Option<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
    /// Riemann sum of `values` times the cell area.
    pub mass: f64,
}

impl DensityField {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.grid.ny + iy]
    }

    fn from_parts(grid: GridSpec, t: Option<f64>, geom: &EnclosureGeometry, xs: Vec<f64>, ys: Vec<f64>, px: &[f64], py: &[f64]) -> Self {
        let values: Vec<f64> = px.iter().flat_map(|&u| py.iter().map(move |&w| u * w)).collect();
        let mass = values.iter().sum::<f64>() * grid.cell_area(geom);
        Self { grid, t, x: xs, y: ys, values, mass }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefluxState {
    pub q_mass: f64,
    pub h: f64,
}

/// Shape of the mass redistributed at the goal wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefluxModel {
    /// Exponential profile `Q h e^{h(x-a)}` with its back-wall images.
    #[default]
    Exponential,
    /// Full x-dependent profile before the exponential approximation, with
    /// a single back-wall image. Only for comparison with the default.
    Full,
}

fn require_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTime(t))
    }
}

fn require_diffusion(params: &MovementParams) -> Result<f64> {
    let qd = params.diffusion();
    if qd > 0.0 {
        Ok(qd)
    } else {
        Err(Error::DegenerateRates("density needs q*D > 0"))
    }
}

/// Free x-marginal: the drifting Gaussian and its mirror image in the
/// back wall `x = 0`.
pub fn x_marginal_free(x: f64, t: f64, params: &MovementParams, x0: f64) -> Result<f64> {
    require_time(t)?;
    let qd = require_diffusion(params)?;
    let m = x0 + params.advection() * t;
    let var4 = 4.0 * qd * t;
    let g = |d: f64| (-d * d / var4).exp();
    Ok((g(x - m) + g(x + m)) / (PI * var4).sqrt())
}

/// y-marginal between reflecting walls at `+-b/2`, started from `y0`.
pub fn y_marginal(y: f64, t: f64, params: &MovementParams, geom: &EnclosureGeometry, tol: f64) -> Result<f64> {
    require_time(t)?;
    let qd = require_diffusion(params)?;
    if y.abs() > 0.5 * geom.b {
        return Err(Error::OutsideEnclosure { x: f64::NAN, y });
    }
    Ok(reflected_gaussian(y, geom.y0, geom.b, 4.0 * qd * t, tol))
}

/// Density on `[-b/2, b/2]` of a Gaussian with variance `var4/2` started at
/// `y0` and folded by both walls.
fn reflected_gaussian(y: f64, y0: f64, b: f64, var4: f64, tol: f64) -> f64 {
    let spread = var4.sqrt();
    let k = image_series_terms(spread, b, tol);
    if k <= MAX_IMAGE_PAIRS {
        let mut sum = 0.0;
        for k in -(k as i64)..=(k as i64) {
            let d1 = y - y0 + 2.0 * k as f64 * b;
            let d2 = y + y0 + (2 * k + 1) as f64 * b;
            sum += (-d1 * d1 / var4).exp() + (-d2 * d2 / var4).exp();
        }
        sum / (PI * var4).sqrt()
    } else {
        // Neumann eigenfunction expansion of the same kernel.
        let rate = PI * PI * var4 / (4.0 * b * b);
        let n_max = ((tol.clamp(f64::MIN_POSITIVE, 0.5).recip().ln() / rate).sqrt()).ceil() as i64 + 1;
        let mut sum = 1.0;
        for n in 1..=n_max {
            let nf = n as f64;
            let c = (nf * PI * (y + 0.5 * b) / b).cos() * (nf * PI * (y0 + 0.5 * b) / b).cos();
            sum += 2.0 * c * (-nf * nf * rate).exp();
        }
        sum / b
    }
}

/// Probability that the free x-process (Gaussian plus back-wall image) lies
/// beyond `x` at time `t`. Equals the integral of [`x_marginal_free`] over
/// `[x, inf)`. With no spread (`t = 0` or `qD = 0`) it is a step, equal to
/// 1/2 exactly at the front.
pub fn passing_probability(x: f64, t: f64, params: &MovementParams, x0: f64) -> f64 {
    let m = x0 + params.advection() * t;
    let s = (4.0 * params.diffusion() * t).sqrt();
    if s == 0.0 {
        let step = |d: f64| {
            if d > 0.0 {
                1.0
            } else if d == 0.0 {
                0.5
            } else {
                0.0
            }
        };
        return step(m - x) + step(-m - x);
    }
    0.5 * (erfc((x - m) / s) + erfc((x + m) / s))
}

/// Mass `Q(t)` that has reached the goal wall.
pub fn q_redistributed(t: f64, params: &MovementParams, geom: &EnclosureGeometry) -> f64 {
    passing_probability(geom.a, t.max(0.0), params, geom.x0)
}

/// Rate `h(t)` of the exponential reflux profile. When `pv = 0` the
/// `pv -> 0` limit `sqrt(pi / (qD t)) / 2` is returned.
pub fn reflux_rate_h(t: f64, params: &MovementParams) -> Result<f64> {
    require_time(t)?;
    let qd = params.diffusion();
    if qd <= 0.0 {
        return Err(Error::DegenerateRates("reflux rate needs q*D > 0"));
    }
    let pv = params.advection();
    if pv == 0.0 {
        return Ok(0.5 * (PI / (qd * t)).sqrt());
    }
    let theta = pv * pv * t / (4.0 * qd);
    Ok(pv / (2.0 * qd * reflux_bracket(theta)))
}

/// `erf(sqrt th)/2 - th erfc(sqrt th) + sqrt(th/pi) e^{-th}`.
fn reflux_bracket(theta: f64) -> f64 {
    let r = theta.sqrt();
    if theta <= 1.0 {
        return 0.5 * erf(r) - theta * erfc(r) + (theta / PI).sqrt() * (-theta).exp();
    }
    // written as 1/2 minus a small positive tail so it settles onto 1/2 monotonically
    let tail = (0.5 + theta) * erfc(r) - (theta / PI).sqrt() * (-theta).exp();
    0.5 - tail.max(0.0)
}

pub fn reflux_state(t: f64, params: &MovementParams, geom: &EnclosureGeometry) -> Result<RefluxState> {
    Ok(RefluxState { q_mass: q_redistributed(t, params, geom), h: reflux_rate_h(t, params)? })
}

/// `h [e^{h(x-a)} + e^{-h(x+a)}] / (1 - e^{-2ha})`, i.e. `h cosh(hx)/sinh(ha)`
/// without overflow. Integrates to 1 over `[0, a]`.
fn cosh_profile(x: f64, h: f64, a: f64) -> f64 {
    h * ((h * (x - a)).exp() + (-h * (x + a)).exp()) / -(-2.0 * h * a).exp_m1()
}

/// Redistributed mass profile, summed over its images in both walls.
pub fn psi_series(x: f64, t: f64, params: &MovementParams, geom: &EnclosureGeometry) -> Result<f64> {
    geom.check_x(x)?;
    let st = reflux_state(t, params, geom)?;
    if !(st.h * geom.a > 0.0) {
        return Err(Error::DegenerateRates("reflux rate times a is zero"));
    }
    Ok(st.q_mass * cosh_profile(x, st.h, geom.a))
}

/// Full reflux profile at distance `d` behind the goal wall, normalized to
/// integrate to 1 over `d >= 0`.
fn full_reflux_shape(d: f64, t: f64, pv: f64, qd: f64, h: f64) -> f64 {
    let s = (4.0 * qd * t).sqrt();
    let k = pv / qd;
    let num = (-k * d).exp() * erfc((d - pv * t) / s) + erfc((pv * t + d) / s);
    num * h / 2.0
}

fn psi_full(x: f64, t: f64, params: &MovementParams, geom: &EnclosureGeometry) -> Result<f64> {
    geom.check_x(x)?;
    let pv = params.advection();
    if pv <= 0.0 {
        return Err(Error::DegenerateRates("full reflux profile needs p*v > 0"));
    }
    let st = reflux_state(t, params, geom)?;
    let qd = params.diffusion();
    let a = geom.a;
    Ok(st.q_mass * (full_reflux_shape(a - x, t, pv, qd, st.h) + full_reflux_shape(a + x, t, pv, qd, st.h)))
}

fn x_part(x: f64, t: f64, params: &MovementParams, geom: &EnclosureGeometry, model: RefluxModel) -> Result<f64> {
    let free = x_marginal_free(x, t, params, geom.x0)?;
    let psi = match model {
        RefluxModel::Exponential => psi_series(x, t, params, geom)?,
        RefluxModel::Full => psi_full(x, t, params, geom)?,
    };
    Ok(free + psi)
}

/// Density per unit area at `(x, y)` and active time `t > 0`.
pub fn density_at(x: f64, y: f64, t: f64, params: &MovementParams, geom: &EnclosureGeometry, tol: f64) -> Result<f64> {
    density_at_with(x, y, t, params, geom, tol, RefluxModel::Exponential)
}

pub fn density_at_with(
    x: f64,
    y: f64,
    t: f64,
    params: &MovementParams,
    geom: &EnclosureGeometry,
    tol: f64,
    model: RefluxModel,
) -> Result<f64> {
    require_time(t)?;
    geom.check_inside(x, y)?;
    Ok(x_part(x, t, params, geom, model)? * y_marginal(y, t, params, geom, tol)?)
}

/// Density at every cell centre. The x- and y-parts are evaluated once per
/// column and row and multiplied.
pub fn density_grid(grid: GridSpec, t: f64, params: &MovementParams, geom: &EnclosureGeometry, tol: f64) -> Result<DensityField> {
    density_grid_with(grid, t, params, geom, tol, RefluxModel::Exponential)
}

pub fn density_grid_with(
    grid: GridSpec,
    t: f64,
    params: &MovementParams,
    geom: &EnclosureGeometry,
    tol: f64,
    model: RefluxModel,
) -> Result<DensityField> {
    require_time(t)?;
    let xs = grid.x_centers(geom);
    let ys = grid.y_centers(geom);
    let px = xs.iter().map(|&x| x_part(x, t, params, geom, model)).collect::<Result<Vec<_>>>()?;
    let py = ys.iter().map(|&y| y_marginal(y, t, params, geom, tol)).collect::<Result<Vec<_>>>()?;
    Ok(DensityField::from_parts(grid, Some(t), geom, xs, ys, &px, &py))
}

fn steady_rate(params: &MovementParams) -> Result<f64> {
    let pv = params.advection();
    let qd = params.diffusion();
    if pv > 0.0 && qd > 0.0 {
        Ok(pv / qd)
    } else {
        Err(Error::DegenerateRates("steady state needs p*v > 0 and q*D > 0"))
    }
}

/// Long-time limit of [`density_at`]: `(k/b) cosh(kx)/sinh(ka)`, `k = pv/qD`.
pub fn steady_state_paper(x: f64, y: f64, params: &MovementParams, geom: &EnclosureGeometry) -> Result<f64> {
    geom.check_inside(x, y)?;
    let k = steady_rate(params)?;
    Ok(cosh_profile(x, k, geom.a) / geom.b)
}

/// Zero-flux stationary density `k e^{k(x-a)} / (b (1 - e^{-ka}))`.
pub fn steady_state_exact(x: f64, y: f64, params: &MovementParams, geom: &EnclosureGeometry) -> Result<f64> {
    geom.check_inside(x, y)?;
    let k = steady_rate(params)?;
    Ok(k * (k * (x - geom.a)).exp() / (geom.b * -(-k * geom.a).exp_m1()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyForm {
    Paper,
    Exact,
}

pub fn steady_grid(grid: GridSpec, form: SteadyForm, params: &MovementParams, geom: &EnclosureGeometry) -> Result<DensityField> {
    let xs = grid.x_centers(geom);
    let ys = grid.y_centers(geom);
    let f = match form {
        SteadyForm::Paper => steady_state_paper,
        SteadyForm::Exact => steady_state_exact,
    };
    let px = xs.iter().map(|&x| f(x, 0.0, params, geom).map(|v| v * geom.b)).collect::<Result<Vec<_>>>()?;
    let py = vec![1.0 / geom.b; ys.len()];
    Ok(DensityField::from_parts(grid, None, geom, xs, ys, &px, &py))
}

/// Time at which half of the mass has reached the goal, `Q(t_M) = 1/2`.
/// `tol` bounds `|Q(t_M) - 1/2|`.
pub fn median_arrival_time(params: &MovementParams, geom: &EnclosureGeometry, tol: f64) -> Result<f64> {
    let pv = params.advection();
    let qd = params.diffusion();
    if pv == 0.0 && qd == 0.0 {
        return Err(Error::NoTransport);
    }
    let dist = geom.a - geom.x0;
    if dist == 0.0 {
        return Ok(0.0);
    }
    if qd == 0.0 {
        return Ok(dist / pv);
    }
    let f = |t: f64| q_redistributed(t, params, geom) - 0.5;
    let mut hi = if pv > 0.0 { dist / pv } else { dist * dist / qd };
    let mut lo = hi;
    let mut n = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        n += 1;
        if n > 2000 || !hi.is_finite() {
            return Err(Error::MaxIterations { iterations: n, estimate: hi });
        }
    }
    while f(lo) > 0.0 {
        lo *= 0.5;
        n += 1;
        if n > 2000 || lo == 0.0 {
            return Err(Error::MaxIterations { iterations: n, estimate: lo });
        }
    }
    let opts = RootOptions { f_tol: tol, x_tol: 1e-15, ..RootOptions::default() };
    let r = find_root_with(f, lo, hi, opts)?;
    if r.residual.abs() > tol {
        return Err(Error::MaxIterations { iterations: r.iterations, estimate: r.root });
    }
    Ok(r.root)
}

/// Start point and box in rescaled units (lengths over `2qD/(pv)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NondimDomain {
    pub alpha: f64,
    pub beta: f64,
    pub xi0: f64,
    pub zeta0: f64,
}

impl NondimDomain {
    pub fn from_geometry(geom: &EnclosureGeometry, params: &MovementParams) -> Result<Self> {
        let (len, _) = crate::model::natural_scales(params)?;
        Ok(Self { alpha: geom.a / len, beta: geom.b / len, xi0: geom.x0 / len, zeta0: geom.y0 / len })
    }
}

/// Density in rescaled variables, where drift is 2 and diffusion is 1.
/// Equals the dimensional density times `(2qD/(pv))^2`.
pub fn density_nondim(xi: f64, zeta: f64, theta: f64, dom: &NondimDomain, tol: f64) -> Result<f64> {
    require_time(theta)?;
    let var4 = 4.0 * theta;
    let norm = 1.0 / (2.0 * (PI * theta).sqrt());
    let m = dom.xi0 + 2.0 * theta;
    let free = norm * ((-(xi - m).powi(2) / var4).exp() + (-(xi + m).powi(2) / var4).exp());
    let sq = theta.sqrt();
    let q = 1.0 + 0.5 * erf((dom.xi0 - dom.alpha + 2.0 * theta) / (2.0 * sq)) - 0.5 * erf((dom.xi0 + dom.alpha + 2.0 * theta) / (2.0 * sq));
    let h = 2.0 / (erf(sq) - 2.0 * theta * erfc(sq) + 2.0 * (theta / PI).sqrt() * (-theta).exp());
    let psi = q * cosh_profile(xi, h, dom.alpha);
    let y = reflected_gaussian(zeta, dom.zeta0, dom.beta, var4, tol);
    Ok((free + psi) * y)
}
