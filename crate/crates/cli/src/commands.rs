use std::path::{Path, PathBuf};
use std::time::Instant;

use boxwalk::density::{
    density_grid_with, median_arrival_time, q_redistributed, steady_grid, DensityField, GridSpec, RefluxModel, SteadyForm,
};
use boxwalk::mfpt::{mean_time_auto, omega, peclet as peclet_ctx, peclet_from_omega};
use boxwalk::model::{MovementParams, Species, SpeciesEnsemble};
use boxwalk::race::{race_curves, CompositionOptions, RaceKind, RaceOptions};
use boxwalk::sim::{binomial_se, simulate_density, simulate_mfpt, simulate_race, Boundary, SimConfig, SimResult, WalkMode};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::config::{echo_geometry, echo_params, ConfigFile, GeometryArgs, MovementArgs, ResolvedGeometry};
use crate::output::{emit, fmt_f64, Format, Table};
use crate::{species, CliError};

/// Largest tolerated gap between the grid mass and 1.
const MASS_TOLERANCE: f64 = 1e-3;
/// Largest censored fraction for which a simulated mean is reported as reliable.
const MAX_CENSORED: f64 = 0.01;

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file [default: stdout]
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl OutputArgs {
    fn write(&self, table: &Table) -> Result<(), CliError> {
        emit(self.out.as_deref(), |w| table.write(self.format, w))
    }
}

#[derive(Debug, Args)]
pub struct MfptArgs {
    #[command(flatten)]
    geom: GeometryArgs,
    #[command(flatten)]
    movement: MovementArgs,
    /// Tabulate at n+1 evenly spaced abscissae over [0, a] instead of at x0
    #[arg(long)]
    grid: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn mfpt(args: &MfptArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let (geom, rg) = args.geom.resolve(cfg)?;
    let (params, raw) = args.movement.resolve(cfg)?;
    let xs: Vec<f64> = match args.grid {
        Some(0) => return Err(CliError::input("--grid needs at least 1 interval")),
        Some(n) => (0..=n).map(|i| if i == n { geom.a } else { geom.a * i as f64 / n as f64 }).collect(),
        None => vec![geom.x0],
    };
    let mut table = Table::new(&["x", "W"]);
    table.meta("command", "mfpt");
    echo_geometry(&mut table.meta, &rg);
    echo_params(&mut table.meta, &raw);
    for x in xs {
        table.push(vec![x.into(), mean_time_auto(&params, &geom, x)?.into()]);
    }
    args.output.write(&table)
}

#[derive(Debug, Args)]
pub struct PecletArgs {
    #[command(flatten)]
    geom: GeometryArgs,
    #[command(flatten)]
    movement: MovementArgs,
    /// Abscissa the remaining distance is measured from [default: x0]
    #[arg(long)]
    x: Option<f64>,
    /// Measured time ratio; switches to inversion, which needs only --p
    #[arg(long)]
    omega: Option<f64>,
    /// Residual tolerance of the inversion
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn peclet(args: &PecletArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    if let Some(om) = args.omega {
        let p = args.movement.p.or(cfg.p).ok_or_else(|| CliError::input("missing --p"))?;
        let pe = peclet_from_omega(om, p, args.tol)?;
        let mut table = Table::new(&["omega", "p", "pe", "regime"]);
        table.meta("command", "peclet");
        table.meta("mode", "inverse");
        table.meta("tol", fmt_f64(args.tol));
        table.push(vec![om.into(), p.into(), pe.into(), boxwalk::mfpt::Regime::classify(pe).as_str().into()]);
        return args.output.write(&table);
    }
    let (geom, rg) = args.geom.resolve(cfg)?;
    let (params, raw) = args.movement.resolve(cfg)?;
    let x = args.x.unwrap_or(geom.x0);
    let ctx = peclet_ctx(&params, &geom, x)?;
    let om = if ctx.pe > 0.0 && params.p() > 0.0 { omega(ctx.pe, params.p(), ctx.r)? } else { f64::NAN };
    let mut table = Table::new(&["x", "pe", "regime", "r", "omega"]);
    table.meta("command", "peclet");
    table.meta("mode", "forward");
    echo_geometry(&mut table.meta, &rg);
    echo_params(&mut table.meta, &raw);
    table.push(vec![x.into(), ctx.pe.into(), ctx.regime.as_str().into(), ctx.r.into(), om.into()]);
    args.output.write(&table)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Steady {
    Paper,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Reflux {
    Exponential,
    Full,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    geom: GeometryArgs,
    #[command(flatten)]
    movement: MovementArgs,
    /// Snapshot times; repeat or separate with commas. With several times,
    /// --out must contain `{t}`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "steady")]
    t: Vec<f64>,
    /// Steady-state profile instead of snapshots
    #[arg(long, value_enum, conflicts_with = "t")]
    steady: Option<Steady>,
    #[arg(long, default_value_t = 200)]
    nx: usize,
    #[arg(long, default_value_t = 20)]
    ny: usize,
    /// Shape of the mass returned at the goal wall
    #[arg(long, value_enum, default_value_t = Reflux::Exponential)]
    reflux: Reflux,
    /// Truncation tolerance of the image series
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Read and report times as wall-clock time, rests included [default: active time]
    #[arg(long = "wall-time")]
    wall_time: bool,
    #[command(flatten)]
    output: OutputArgs,
}

/// Analytic times are active time. A walker with its rests spread out has
/// active time equal to the original's wall-clock time.
fn clock(params: MovementParams, wall: bool) -> MovementParams {
    if wall {
        params.time_averaged()
    } else {
        params
    }
}

fn clock_name(wall: bool) -> &'static str {
    if wall {
        "wall"
    } else {
        "active"
    }
}

fn field_table(field: &DensityField, header: Vec<(String, String)>) -> Result<Table, CliError> {
    let mut table = Table::new(&["x", "y", "p"]);
    table.meta = header;
    table.meta("mass", fmt_f64(field.mass));
    for (ix, &x) in field.x.iter().enumerate() {
        for (iy, &y) in field.y.iter().enumerate() {
            table.push(vec![x.into(), y.into(), field.at(ix, iy).into()]);
        }
    }
    Ok(table)
}

fn check_mass(field: &DensityField, label: &str) -> Result<(), CliError> {
    if (field.mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(CliError::numerical(format!(
            "{label}: grid mass {} differs from 1 by more than {MASS_TOLERANCE}; refine --nx/--ny",
            field.mass
        )));
    }
    Ok(())
}

pub fn density(args: &DensityArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let (geom, rg) = args.geom.resolve(cfg)?;
    let (params, raw) = args.movement.resolve(cfg)?;
    let params = clock(params, args.wall_time);
    let grid = GridSpec::new(args.nx, args.ny)?;
    let mut header = Vec::new();
    header.push(("command".to_string(), "density".to_string()));
    echo_geometry(&mut header, &rg);
    echo_params(&mut header, &raw);
    header.push(("nx".into(), args.nx.to_string()));
    header.push(("ny".into(), args.ny.to_string()));
    header.push(("time".into(), clock_name(args.wall_time).into()));

    if let Some(form) = args.steady {
        let (form, name) = match form {
            Steady::Paper => (SteadyForm::Paper, "paper"),
            Steady::Exact => (SteadyForm::Exact, "exact"),
        };
        let field = steady_grid(grid, form, &params, &geom)?;
        header.push(("steady".into(), name.into()));
        let table = field_table(&field, header)?;
        args.output.write(&table)?;
        return check_mass(&field, "steady state");
    }

    let templated = args.output.out.as_ref().is_some_and(|p| p.to_string_lossy().contains("{t}"));
    if args.t.len() > 1 && args.output.out.is_some() && !templated {
        return Err(CliError::input("several --t values need an --out path containing {t}"));
    }
    let (model, reflux_name) = match args.reflux {
        Reflux::Exponential => (RefluxModel::Exponential, "exponential"),
        Reflux::Full => (RefluxModel::Full, "full"),
    };
    header.push(("reflux".into(), reflux_name.into()));
    header.push(("tol".into(), fmt_f64(args.tol)));
    let mut fields = Vec::with_capacity(args.t.len());
    for &t in &args.t {
        fields.push((t, density_grid_with(grid, t, &params, &geom, args.tol, model)?));
    }
    for (t, field) in &fields {
        let mut h = header.clone();
        h.push(("t".into(), fmt_f64(*t)));
        let table = field_table(field, h)?;
        let path = args.output.out.as_ref().map(|p| PathBuf::from(p.to_string_lossy().replace("{t}", &t.to_string())));
        match path {
            Some(p) => emit(Some(&p), |w| table.write(args.output.format, w))?,
            None => emit(None, |w| table.write(args.output.format, w))?,
        }
    }
    for (t, field) in &fields {
        check_mass(field, &format!("t = {t}"))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MedianArgs {
    #[command(flatten)]
    geom: GeometryArgs,
    #[command(flatten)]
    movement: MovementArgs,
    /// Bound on |Q(t_M) - 1/2|
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Read and report times as wall-clock time, rests included [default: active time]
    #[arg(long = "wall-time")]
    wall_time: bool,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn median(args: &MedianArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let (geom, rg) = args.geom.resolve(cfg)?;
    let (params, raw) = args.movement.resolve(cfg)?;
    let params = clock(params, args.wall_time);
    let tm = median_arrival_time(&params, &geom, args.tol)?;
    let mut table = Table::new(&["t_median", "q_at_median"]);
    table.meta("command", "median");
    echo_geometry(&mut table.meta, &rg);
    echo_params(&mut table.meta, &raw);
    table.meta("tol", fmt_f64(args.tol));
    table.meta("time", clock_name(args.wall_time));
    table.push(vec![tm.into(), q_redistributed(tm, &params, &geom).into()]);
    args.output.write(&table)
}

fn parse_kind(s: &str) -> Result<RaceKind, String> {
    s.parse::<RaceKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct TimeGridArgs {
    /// Last time of the output grid
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// First time of the grid [default: t-max/steps]
    #[arg(long = "t-min")]
    t_min: Option<f64>,
    /// Number of grid times
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Space the grid logarithmically
    #[arg(long)]
    log: bool,
}

impl TimeGridArgs {
    fn times(&self, cfg: &ConfigFile) -> Result<Vec<f64>, CliError> {
        let hi = self.t_max.or(cfg.t_max).ok_or_else(|| CliError::input("missing --t-max"))?;
        let n = self.steps;
        if n == 0 || !(hi > 0.0 && hi.is_finite()) {
            return Err(CliError::input("time grid needs --steps >= 1 and a positive finite --t-max"));
        }
        let lo = self.t_min.unwrap_or(hi / n as f64);
        if !(lo > 0.0 && lo <= hi) || (n > 1 && lo == hi) {
            return Err(CliError::input(format!("--t-min must lie in (0, t-max) (got {lo})")));
        }
        if n == 1 {
            return Ok(vec![hi]);
        }
        let f = |i: usize| i as f64 / (n - 1) as f64;
        Ok((0..n)
            .map(|i| match i {
                _ if i == n - 1 => hi,
                _ if self.log => lo * (hi / lo).powf(f(i)),
                _ => lo + (hi - lo) * f(i),
            })
            .collect())
    }
}

#[derive(Debug, Args)]
pub struct RaceArgs {
    /// JSON array of {name, N, p, s, v, D}
    #[arg(long)]
    species: PathBuf,
    #[command(flatten)]
    geom: GeometryArgs,
    #[command(flatten)]
    grid: TimeGridArgs,
    /// Quantities to tabulate [default: all that apply]
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    kinds: Vec<RaceKind>,
    /// Lower bound applied to arrival probabilities in the composition
    #[arg(long, default_value_t = 1e-4)]
    floor: f64,
    /// Absolute tolerance of the placement integrals
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Read and report times as wall-clock time, rests included [default: active time]
    #[arg(long = "wall-time")]
    wall_time: bool,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn race(args: &RaceArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let listed = species::load(&args.species)?;
    let ens = if args.wall_time {
        let scaled = listed.entries().iter().map(|s| Species { params: s.params.time_averaged(), ..s.clone() }).collect();
        SpeciesEnsemble::new(scaled)?
    } else {
        listed.clone()
    };
    let (geom, rg) = args.geom.resolve(cfg)?;
    let times = args.grid.times(cfg)?;
    let kinds: Vec<RaceKind> = if args.kinds.is_empty() {
        RaceKind::ALL.into_iter().filter(|&k| k != RaceKind::ThirdPlace || ens.len() >= 3).collect()
    } else {
        args.kinds.clone()
    };
    let opts = RaceOptions { composition: CompositionOptions::new(args.floor)?, quad_tol: args.tol };
    let curves = race_curves(&ens, &geom, &times, &kinds, &opts)?;

    let mut table = Table::new(&["time", "species", "kind", "value"]);
    table.meta("command", "race");
    echo_geometry(&mut table.meta, &rg);
    table.meta("species_file", args.species.display());
    table.meta("time", clock_name(args.wall_time));
    for s in listed.entries() {
        let r = s.params.raw();
        table.meta(
            &format!("species.{}", s.name),
            format!("N={} p={} s={} v={} D={}", s.population, fmt_f64(r.p), fmt_f64(r.s), fmt_f64(r.v), fmt_f64(r.d)),
        );
    }
    table.meta("floor", fmt_f64(args.floor));
    table.meta("tol", fmt_f64(args.tol));
    for (ti, &t) in times.iter().enumerate() {
        for c in &curves {
            for s in &c.series {
                table.push(vec![t.into(), s.name.as_str().into(), c.kind.as_str().into(), s.values[ti].into()]);
            }
        }
    }
    args.output.write(&table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SimMode {
    /// Arrival times at the absorbing goal wall
    Mfpt,
    /// Occupancy histogram with every wall reflecting
    Density,
    /// Arrival order of one walker per species
    Race,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Walk {
    Mixed,
    Biased,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimMode::Mfpt)]
    mode: SimMode,
    /// Step rule: directed jumps mixed with lattice steps, or biased lattice steps
    #[arg(long, value_enum, default_value_t = Walk::Mixed)]
    walk: Walk,
    /// Lattice step length
    #[arg(long)]
    delta: Option<f64>,
    /// Walkers (per species in race mode) [default: 10000]
    #[arg(long)]
    walkers: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
    /// Print the elapsed time to stderr
    #[arg(long)]
    wall_clock: bool,
    #[command(flatten)]
    geom: GeometryArgs,
    #[command(flatten)]
    movement: MovementArgs,
    /// mfpt: censoring time [default: none]. race: end of the time grid
    #[command(flatten)]
    grid: TimeGridArgs,
    /// Species file for race mode
    #[arg(long)]
    species: Option<PathBuf>,
    /// Snapshot time for density mode
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 50)]
    nx: usize,
    #[arg(long, default_value_t = 10)]
    ny: usize,
    /// Also write the density histogram as CSV here
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Output file [default: stdout]
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Serialize)]
struct SimEcho {
    mode: SimMode,
    walk: WalkMode,
    delta: f64,
    walkers: u64,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    geometry: ResolvedGeometry,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<boxwalk::model::RawParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_snapshot: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<GridSpec>,
}

#[derive(Serialize)]
struct SimOutput<'a> {
    command: &'static str,
    config: &'a SimEcho,
    warnings: &'a [String],
    result: &'a SimResult,
}

fn sim_table(echo: &SimEcho, warnings: &[String], result: &SimResult) -> Result<Table, CliError> {
    let mut table;
    if let Some(m) = &result.mfpt {
        table = Table::new(&["mean", "mean_active", "std_error", "median", "n_effective", "censored", "censored_fraction"]);
        table.push(vec![
            m.mean.into(),
            m.mean_active.into(),
            m.std_error.into(),
            m.median.into(),
            m.n_effective.into(),
            m.censored.into(),
            m.censored_fraction.into(),
        ]);
    } else if let Some(h) = &result.histogram {
        table = histogram_table(h);
    } else if let Some(r) = &result.race {
        table = Table::new(&["time", "species", "kind", "value", "se"]);
        for (ti, &t) in r.times.iter().enumerate() {
            for (k, name) in r.species.iter().enumerate() {
                for (kind, v) in [
                    ("arrival_cdf", &r.arrival_cdf),
                    ("first_place", &r.first_place),
                    ("second_place", &r.second_place),
                    ("third_place", &r.third_place),
                ] {
                    let f = v[k][ti];
                    table.push(vec![t.into(), name.as_str().into(), kind.into(), f.into(), binomial_se(f, r.walkers).into()]);
                }
            }
        }
    } else {
        return Err(CliError::numerical("simulation produced no result"));
    }
    let mut meta = vec![("command".to_string(), "simulate".to_string())];
    let cfg = serde_json::to_value(echo).map_err(|e| CliError::io(e.to_string()))?;
    meta.push(("config".into(), cfg.to_string()));
    meta.push(("tau".into(), fmt_f64(result.tau)));
    for w in warnings {
        meta.push(("warning".into(), w.clone()));
    }
    table.meta = meta;
    Ok(table)
}

fn histogram_table(h: &boxwalk::sim::Histogram) -> Table {
    let mut table = Table::new(&["x", "y", "count", "density", "density_se"]);
    for (ix, &x) in h.x.iter().enumerate() {
        for (iy, &y) in h.y.iter().enumerate() {
            let i = ix * h.grid.ny + iy;
            table.push(vec![x.into(), y.into(), h.counts[i].into(), h.density[i].into(), h.density_se[i].into()]);
        }
    }
    table
}

pub fn simulate(args: &SimulateArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let (geom, rg) = args.geom.resolve(cfg)?;
    let delta = args.delta.or(cfg.delta).ok_or_else(|| CliError::input("missing --delta"))?;
    let mut sc = SimConfig::new(delta, args.walkers.or(cfg.walkers).unwrap_or(10_000), args.seed.or(cfg.seed).unwrap_or(0));
    sc.mode = match args.walk {
        Walk::Mixed => WalkMode::Mixed,
        Walk::Biased => WalkMode::Biased,
    };
    sc.threads = args.threads;
    if sc.walkers == 0 {
        return Err(CliError::input("--walkers must be at least 1"));
    }
    let mut echo = SimEcho {
        mode: args.mode,
        walk: sc.mode,
        delta,
        walkers: sc.walkers,
        seed: sc.seed,
        t_max: None,
        geometry: rg,
        params: None,
        t_snapshot: None,
        grid: None,
    };
    let warnings = sc.warnings(&geom);
    for w in &warnings {
        eprintln!("boxwalk: warning: {w}");
    }

    let start = Instant::now();
    let result = match args.mode {
        SimMode::Mfpt => {
            let (params, raw) = args.movement.resolve(cfg)?;
            echo.params = Some(raw);
            if let Some(t) = args.grid.t_max.or(cfg.t_max) {
                sc.t_max = t;
                echo.t_max = Some(t);
            }
            simulate_mfpt(&params, &geom, &sc)?
        }
        SimMode::Density => {
            let (params, raw) = args.movement.resolve(cfg)?;
            echo.params = Some(raw);
            let t = args.t.ok_or_else(|| CliError::input("density mode needs --t"))?;
            let grid = GridSpec::new(args.nx, args.ny)?;
            echo.t_snapshot = Some(t);
            echo.grid = Some(grid);
            sc.boundary = Boundary::AllReflecting;
            simulate_density(&params, &geom, &sc, t, grid)?
        }
        SimMode::Race => {
            let path = args.species.as_deref().ok_or_else(|| CliError::input("race mode needs --species"))?;
            let ens = species::load(path)?;
            let times = args.grid.times(cfg)?;
            sc.t_max = *times.last().expect("non-empty grid");
            echo.t_max = Some(sc.t_max);
            simulate_race(&ens, &geom, &sc, &times)?
        }
    };
    if args.wall_clock {
        eprintln!("boxwalk: simulation took {:.3} s", start.elapsed().as_secs_f64());
    }

    match args.format {
        Format::Json => {
            let out = SimOutput { command: "simulate", config: &echo, warnings: &warnings, result: &result };
            emit(args.out.as_deref(), |w| {
                serde_json::to_writer_pretty(&mut *w, &out)?;
                writeln!(w)
            })?;
        }
        Format::Csv => {
            let table = sim_table(&echo, &warnings, &result)?;
            emit(args.out.as_deref(), |w| table.write_csv(w))?;
        }
    }
    if let (Some(path), Some(h)) = (&args.histogram, &result.histogram) {
        write_histogram(path, h)?;
    }
    if let Some(m) = &result.mfpt {
        if m.censored_fraction > MAX_CENSORED {
            return Err(CliError::unreliable(format!(
                "{:.2}% of walkers were censored at t_max; the mean is biased low",
                100.0 * m.censored_fraction
            )));
        }
    }
    Ok(())
}

fn write_histogram(path: &Path, h: &boxwalk::sim::Histogram) -> Result<(), CliError> {
    let mut table = histogram_table(h);
    table.meta("t", fmt_f64(h.t));
    table.meta("steps", h.steps);
    emit(Some(path), |w| table.write_csv(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t_max: f64, t_min: Option<f64>, steps: usize, log: bool) -> TimeGridArgs {
        TimeGridArgs { t_max: Some(t_max), t_min, steps, log }
    }

    #[test]
    fn time_grids() {
        let cfg = ConfigFile::default();
        assert_eq!(grid(10.0, None, 4, false).times(&cfg).unwrap(), vec![2.5, 5.0, 7.5, 10.0]);
        let g = grid(100.0, Some(1.0), 3, true).times(&cfg).unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12 && g[2] == 100.0);
        assert!(grid(10.0, Some(20.0), 3, false).times(&cfg).is_err());
        assert!(grid(10.0, None, 0, false).times(&cfg).is_err());
    }
}
