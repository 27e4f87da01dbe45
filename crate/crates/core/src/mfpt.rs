//! Mean first-passage time to the goal wall, the Peclet number, and the
//! relative travel time `Omega` with its inverse.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EnclosureGeometry, MovementParams};
use crate::numerics::{exp_defect_ratio, find_root_with, one_minus_exp_ratio, RootOptions};

/// Transport regime by rule-of-thumb Peclet thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    DiffusionDominated,
    Mixed,
    AdvectionDominated,
}

impl Regime {
    pub fn classify(pe: f64) -> Self {
        if pe < 0.1 {
            Regime::DiffusionDominated
        } else if pe > 10.0 {
            Regime::AdvectionDominated
        } else {
            Regime::Mixed
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::DiffusionDominated => "diffusion-dominated",
            Regime::Mixed => "mixed",
            Regime::AdvectionDominated => "advection-dominated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PecletContext {
    /// `pv (a - x) / (qD)`.
    pub pe: f64,
    /// Remaining-distance fraction `1 - x/a`.
    pub r: f64,
    /// Remaining distance `a - x`.
    pub l: f64,
    pub regime: Regime,
}

/// Which single-mechanism limit of the mean time to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    /// `v -> 0`: pure search.
    DiffusionOnly,
    /// `D -> 0`: pure directed travel.
    AdvectionOnly,
}

/// Mean time to reach the goal wall `x = a` from abscissa `x`, counting
/// resting time. Independent of the start ordinate.
///
/// Requires both `pv > 0` and `qD > 0`; the one-sided cases are handled by
/// [`mean_time_limit`].
pub fn mean_time_to_goal(params: &MovementParams, geom: &EnclosureGeometry, x: f64) -> Result<f64> {
    geom.check_x(x)?;
    let pv = params.advection();
    let qd = params.diffusion();
    if !(pv > 0.0 && qd > 0.0) {
        return Err(Error::DegenerateRates("mean time needs p*v > 0 and q*D > 0; use the limit form"));
    }
    let l = geom.a - x;
    if l == 0.0 {
        return Ok(0.0);
    }
    let phi = pv / qd;
    // (a-x)/pv - qD/(pv)^2 (e^{-phi x} - e^{-phi a}), regrouped so nothing
    // cancels for small phi*a:
    //   L/pv * [f(phi L) + g(phi L) (1 - e^{-phi x})]
    let u = phi * l;
    let w = phi * x;
    let bracket = exp_defect_ratio(u) + one_minus_exp_ratio(u) * -(-w).exp_m1();
    Ok(l / pv * bracket / (1.0 - params.s()))
}

pub fn mean_time_limit(params: &MovementParams, geom: &EnclosureGeometry, x: f64, which: Limit) -> Result<f64> {
    geom.check_x(x)?;
    let a = geom.a;
    let active = 1.0 - params.s();
    match which {
        Limit::DiffusionOnly => {
            let qd = params.diffusion();
            if qd <= 0.0 {
                return Err(Error::DegenerateRates("diffusion-only limit needs q*D > 0"));
            }
            Ok((a - x) * (a + x) / (2.0 * active * qd))
        }
        Limit::AdvectionOnly => {
            let pv = params.advection();
            if pv <= 0.0 {
                return Err(Error::DegenerateRates("advection-only limit needs p*v > 0"));
            }
            Ok((a - x) / (active * pv))
        }
    }
}

/// Mean time using whichever form the rates allow: the full expression when
/// both are positive, otherwise the matching one-sided limit.
pub fn mean_time_auto(params: &MovementParams, geom: &EnclosureGeometry, x: f64) -> Result<f64> {
    if params.advection() == 0.0 {
        mean_time_limit(params, geom, x, Limit::DiffusionOnly)
    } else if params.diffusion() == 0.0 {
        mean_time_limit(params, geom, x, Limit::AdvectionOnly)
    } else {
        mean_time_to_goal(params, geom, x)
    }
}

pub fn peclet(params: &MovementParams, geom: &EnclosureGeometry, x: f64) -> Result<PecletContext> {
    geom.check_x(x)?;
    let qd = params.diffusion();
    if qd <= 0.0 {
        return Err(Error::DegenerateRates("Peclet number needs q*D > 0"));
    }
    let l = geom.a - x;
    let pe = params.advection() * l / qd;
    Ok(PecletContext { pe, r: l / geom.a, l, regime: Regime::classify(pe) })
}

/// Travel time relative to covering the remaining distance at full speed `v`
/// (no resting):
/// `(1/p) [1 - (e^{-c pe} - e^{-pe/r}) / pe]` with `c = (1 - r)/r`.
pub fn omega(pe: f64, p: f64, r: f64) -> Result<f64> {
    if !(pe > 0.0) || !pe.is_finite() {
        return Err(Error::InvalidParameter { field: "pe", reason: format!("must be > 0 (got {pe})") });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter { field: "p", reason: format!("out of (0,1] (got {p})") });
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParameter { field: "r", reason: format!("out of (0,1] (got {r})") });
    }
    Ok(omega_unchecked(pe, p, r))
}

fn omega_unchecked(pe: f64, p: f64, r: f64) -> f64 {
    // e^{-c pe} - e^{-pe/r} = e^{-c pe} (1 - e^{-pe}), and
    // 1 - e^{-w} g(pe) = f(pe) + g(pe) (1 - e^{-w}) with w = c pe.
    let w = (1.0 - r) / r * pe;
    (exp_defect_ratio(pe) + one_minus_exp_ratio(pe) * -(-w).exp_m1()) / p
}

/// Inverts `omega(pe, p, 1)` for `pe`.
///
/// `tol` bounds the final residual `|omega(pe) - omega_measured|`.
pub fn peclet_from_omega(omega_measured: f64, p: f64, tol: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter { field: "p", reason: format!("out of (0,1] (got {p})") });
    }
    if !omega_measured.is_finite() {
        return Err(Error::OmegaOutOfRange { omega: omega_measured, p });
    }
    if omega_measured == 1.0 / p || omega_measured * p == 1.0 {
        return Err(Error::InfinitePeclet);
    }
    if omega_measured <= 0.0 || omega_measured * p > 1.0 {
        return Err(Error::OmegaOutOfRange { omega: omega_measured, p });
    }

    let resid = |u: f64| omega_unchecked(u.exp2(), p, 1.0) - omega_measured;
    let (mut lo, mut hi) = (-20.0, 40.0);
    while resid(lo) > 0.0 {
        if lo <= -1000.0 {
            return Err(Error::OmegaOutOfRange { omega: omega_measured, p });
        }
        lo -= 20.0;
    }
    while resid(hi) < 0.0 {
        if hi >= 1000.0 {
            return Err(Error::InfinitePeclet);
        }
        hi += 40.0;
    }

    let opts = RootOptions { f_tol: 0.0, x_tol: 1e-15, max_iter: 500 };
    let root = find_root_with(resid, lo, hi, opts)?.root;

    // Omega flattens at large pe, so a whole run of representable u maps to
    // the same double. Return the middle of that run rather than whichever
    // end the root finder happened to stop at.
    let below = edge(|u| resid(u) < 0.0, lo, root);
    let above = edge(|u| resid(u) <= 0.0, root, hi);
    let u = 0.5 * (below + above);
    let pe = u.exp2();

    let r = resid(u);
    if r.abs() > tol {
        return Err(Error::MaxIterations { iterations: opts.max_iter, estimate: pe });
    }
    Ok(pe)
}

/// Last point where `pred` holds, given `pred(lo)` and the bracket end `hi`.
fn edge(pred: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    if !pred(lo) {
        return lo;
    }
    if pred(hi) {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
