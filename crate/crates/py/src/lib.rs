//! Python bindings. Parameters are plain floats wrapped in two small classes;
//! structured results come back as dicts and lists.

// pyo3 0.22 macro expansion trips this lint on every PyResult signature
#![allow(clippy::useless_conversion)]

use boxwalk::density::{self, GridSpec};
use boxwalk::model::{EnclosureGeometry, MovementParams, Species, SpeciesEnsemble};
use boxwalk::race::{self, CompositionOptions, RaceKind, RaceOptions};
use boxwalk::sim::{self, Boundary, SimConfig, WalkMode};
use boxwalk::{mfpt, Error};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use pythonize::pythonize;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_dict<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    Ok(pythonize(py, value).map_err(|e| PyValueError::new_err(e.to_string()))?.unbind())
}

/// Movement parameters: directed fraction `p`, resting fraction `s`, speed
/// `v` and diffusivity `D`.
#[pyclass(frozen)]
#[derive(Clone)]
struct Movement {
    inner: MovementParams,
}

#[pymethods]
impl Movement {
    #[new]
    #[pyo3(signature = (p, v, D, s = 0.0))]
    #[allow(non_snake_case)]
    fn new(p: f64, v: f64, D: f64, s: f64) -> PyResult<Self> {
        Ok(Self { inner: MovementParams::new(p, s, v, D).map_err(to_py)? })
    }

    #[getter]
    fn advection(&self) -> f64 {
        self.inner.advection()
    }

    #[getter]
    fn diffusion(&self) -> f64 {
        self.inner.diffusion()
    }

    /// Same walker with rests spread out; analytic times computed with it
    /// are wall-clock times.
    fn time_averaged(&self) -> Self {
        Self { inner: self.inner.time_averaged() }
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!("Movement(p={}, v={}, D={}, s={})", m.p(), m.v(), m.d(), m.s())
    }
}

/// Box `[0, a] x [-b/2, b/2]` with the goal wall at `x = a` and the start
/// point `(x0, y0)`.
#[pyclass(frozen)]
#[derive(Clone)]
struct Enclosure {
    inner: EnclosureGeometry,
}

#[pymethods]
impl Enclosure {
    #[new]
    #[pyo3(signature = (a, b, x0 = 0.0, y0 = 0.0))]
    fn new(a: f64, b: f64, x0: f64, y0: f64) -> PyResult<Self> {
        Ok(Self { inner: EnclosureGeometry::new(a, b, x0, y0).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!("Enclosure(a={}, b={}, x0={}, y0={})", g.a, g.b, g.x0, g.y0)
    }
}

/// Mean time to the goal wall from abscissa `x` (defaults to `x0`).
#[pyfunction]
#[pyo3(signature = (m, g, x = None))]
fn mean_time(m: &Movement, g: &Enclosure, x: Option<f64>) -> PyResult<f64> {
    mfpt::mean_time_auto(&m.inner, &g.inner, x.unwrap_or(g.inner.x0)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (m, g, x = None))]
fn peclet(py: Python<'_>, m: &Movement, g: &Enclosure, x: Option<f64>) -> PyResult<PyObject> {
    let ctx = mfpt::peclet(&m.inner, &g.inner, x.unwrap_or(g.inner.x0)).map_err(to_py)?;
    to_dict(py, &ctx)
}

#[pyfunction]
fn omega(pe: f64, p: f64, r: f64) -> PyResult<f64> {
    mfpt::omega(pe, p, r).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (omega, p, tol = 1e-14))]
fn peclet_from_omega(omega: f64, p: f64, tol: f64) -> PyResult<f64> {
    mfpt::peclet_from_omega(omega, p, tol).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (m, g, x, y, t, tol = 1e-10))]
fn density_at(m: &Movement, g: &Enclosure, x: f64, y: f64, t: f64, tol: f64) -> PyResult<f64> {
    density::density_at(x, y, t, &m.inner, &g.inner, tol).map_err(to_py)
}

/// Density on an `nx` by `ny` grid of cell centers. The dict carries `x`,
/// `y`, the flattened `values` (x-major) and their Riemann-sum `mass`.
#[pyfunction]
#[pyo3(signature = (m, g, t, nx = 200, ny = 20, tol = 1e-10))]
fn density_grid(py: Python<'_>, m: &Movement, g: &Enclosure, t: f64, nx: usize, ny: usize, tol: f64) -> PyResult<PyObject> {
    let grid = GridSpec::new(nx, ny).map_err(to_py)?;
    let field = py.allow_threads(|| density::density_grid(grid, t, &m.inner, &g.inner, tol)).map_err(to_py)?;
    to_dict(py, &field)
}

/// Long-run density at `(x, y)`; `exact=False` gives the simplified form.
#[pyfunction]
#[pyo3(signature = (m, g, x, y = 0.0, exact = true))]
fn steady_state(m: &Movement, g: &Enclosure, x: f64, y: f64, exact: bool) -> PyResult<f64> {
    if exact { density::steady_state_exact(x, y, &m.inner, &g.inner) } else { density::steady_state_paper(x, y, &m.inner, &g.inner) }
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (m, g, tol = 1e-10))]
fn median_time(py: Python<'_>, m: &Movement, g: &Enclosure, tol: f64) -> PyResult<f64> {
    py.allow_threads(|| density::median_arrival_time(&m.inner, &g.inner, tol)).map_err(to_py)
}

fn ensemble(species: &Bound<'_, PyAny>) -> PyResult<SpeciesEnsemble> {
    let mut entries = Vec::new();
    for item in species.iter()? {
        let item = item?;
        let d = item.downcast::<PyDict>()?;
        let get = |k: &str| -> PyResult<Bound<'_, PyAny>> {
            d.get_item(k)?.ok_or_else(|| PyValueError::new_err(format!("species entry is missing '{k}'")))
        };
        let s = match d.get_item("s")? {
            Some(v) => v.extract()?,
            None => 0.0,
        };
        let params = MovementParams::new(get("p")?.extract()?, s, get("v")?.extract()?, get("D")?.extract()?).map_err(to_py)?;
        entries.push(Species { name: get("name")?.extract()?, params, population: get("N")?.extract()? });
    }
    SpeciesEnsemble::new(entries).map_err(to_py)
}

/// Race quantities on an ascending time grid. `species` is a list of dicts
/// with keys `name`, `N`, `p`, `v`, `D` and optionally `s`. Returns a list
/// of `{kind, times, series}` dicts.
#[pyfunction]
#[pyo3(signature = (species, g, times, kinds = None, floor = 1e-4, tol = 1e-12))]
fn race_curves(
    py: Python<'_>,
    species: &Bound<'_, PyAny>,
    g: &Enclosure,
    times: Vec<f64>,
    kinds: Option<Vec<String>>,
    floor: f64,
    tol: f64,
) -> PyResult<PyObject> {
    let ens = ensemble(species)?;
    let kinds: Vec<RaceKind> = match kinds {
        Some(ks) => ks.iter().map(|k| k.parse()).collect::<Result<_, _>>().map_err(to_py)?,
        None => RaceKind::ALL.to_vec(),
    };
    let opts = RaceOptions { composition: CompositionOptions::new(floor).map_err(to_py)?, quad_tol: tol };
    let curves = py.allow_threads(|| race::race_curves(&ens, &g.inner, &times, &kinds, &opts)).map_err(to_py)?;
    to_dict(py, &curves)
}

fn sim_config(delta: f64, walkers: u64, seed: u64, t_max: Option<f64>, biased: bool, threads: Option<usize>) -> SimConfig {
    let mut cfg = SimConfig::new(delta, walkers, seed);
    if biased {
        cfg.mode = WalkMode::Biased;
    }
    if let Some(t) = t_max {
        cfg.t_max = t;
    }
    cfg.threads = threads;
    cfg
}

/// Monte Carlo arrival times from the start point.
#[pyfunction]
#[pyo3(signature = (m, g, delta, walkers = 10_000, seed = 0, t_max = None, biased = false, threads = None))]
#[allow(clippy::too_many_arguments)]
fn simulate_mfpt(
    py: Python<'_>,
    m: &Movement,
    g: &Enclosure,
    delta: f64,
    walkers: u64,
    seed: u64,
    t_max: Option<f64>,
    biased: bool,
    threads: Option<usize>,
) -> PyResult<PyObject> {
    let cfg = sim_config(delta, walkers, seed, t_max, biased, threads);
    let res = py.allow_threads(|| sim::simulate_mfpt(&m.inner, &g.inner, &cfg)).map_err(to_py)?;
    to_dict(py, &res)
}

/// Monte Carlo occupancy histogram at time `t`. Every wall reflects here,
/// the goal wall included.
#[pyfunction]
#[pyo3(signature = (m, g, t, delta, walkers = 10_000, seed = 0, nx = 50, ny = 10, biased = false, threads = None))]
#[allow(clippy::too_many_arguments)]
fn simulate_density(
    py: Python<'_>,
    m: &Movement,
    g: &Enclosure,
    t: f64,
    delta: f64,
    walkers: u64,
    seed: u64,
    nx: usize,
    ny: usize,
    biased: bool,
    threads: Option<usize>,
) -> PyResult<PyObject> {
    let mut cfg = sim_config(delta, walkers, seed, None, biased, threads);
    cfg.boundary = Boundary::AllReflecting;
    let grid = GridSpec::new(nx, ny).map_err(to_py)?;
    let res = py.allow_threads(|| sim::simulate_density(&m.inner, &g.inner, &cfg, t, grid)).map_err(to_py)?;
    to_dict(py, &res)
}

#[pymodule]
#[pyo3(name = "boxwalk")]
fn boxwalk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Movement>()?;
    m.add_class::<Enclosure>()?;
    m.add_function(wrap_pyfunction!(mean_time, m)?)?;
    m.add_function(wrap_pyfunction!(peclet, m)?)?;
    m.add_function(wrap_pyfunction!(omega, m)?)?;
    m.add_function(wrap_pyfunction!(peclet_from_omega, m)?)?;
    m.add_function(wrap_pyfunction!(density_at, m)?)?;
    m.add_function(wrap_pyfunction!(density_grid, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(median_time, m)?)?;
    m.add_function(wrap_pyfunction!(race_curves, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_mfpt, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_density, m)?)?;
    Ok(())
}
