//! Domain types for movement behavior and the enclosure, plus the natural
//! length and time scales of the transport problem.
//!
//! Units are whatever the caller chooses, as long as they are consistent
//! (e.g. metres and seconds throughout).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unchecked behavioral parameters as they arrive from a file or flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub p: f64,
    pub s: f64,
    pub v: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

/// Validated movement behavior of one species.
///
/// A fraction `s` of the time is spent resting. Of the active time, a
/// fraction `p` is directed movement toward the goal at speed `v` and the
/// remaining `q = 1 - p` is a lattice random walk with diffusion
/// coefficient `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovementParams {
    p: f64,
    q: f64,
    s: f64,
    v: f64,
    d: f64,
}

impl MovementParams {
    pub fn new(p: f64, s: f64, v: f64, d: f64) -> Result<Self> {
        validate_params(RawParams { p, s, v, d })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Effective advection rate `p v`.
    pub fn advection(&self) -> f64 {
        self.p * self.v
    }

    /// Effective diffusion coefficient `q D`.
    pub fn diffusion(&self) -> f64 {
        self.q * self.d
    }

    pub fn raw(&self) -> RawParams {
        RawParams { p: self.p, s: self.s, v: self.v, d: self.d }
    }

    /// The same walker with its rests spread evenly over time: speed and
    /// diffusivity scaled by `1 - s`, no resting. Its active time is the
    /// original walker's wall-clock time.
    pub fn time_averaged(&self) -> MovementParams {
        let active = 1.0 - self.s;
        MovementParams { s: 0.0, v: self.v * active, d: self.d * active, ..*self }
    }
}

fn check_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { field, reason: format!("must be finite (got {value})") })
    }
}

/// Range-checks raw parameters and fills in `q = 1 - p`.
pub fn validate_params(raw: RawParams) -> Result<MovementParams> {
    let RawParams { p, s, v, d } = raw;
    check_finite("p", p)?;
    check_finite("s", s)?;
    check_finite("v", v)?;
    check_finite("D", d)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter { field: "p", reason: format!("out of [0,1] (got {p})") });
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidParameter { field: "s", reason: format!("out of [0,1) (got {s})") });
    }
    if v < 0.0 {
        return Err(Error::InvalidParameter { field: "v", reason: format!("must be >= 0 (got {v})") });
    }
    if d < 0.0 {
        return Err(Error::InvalidParameter { field: "D", reason: format!("must be >= 0 (got {d})") });
    }
    let q = 1.0 - p;
    if p * v == 0.0 && q * d == 0.0 {
        return Err(Error::NoTransport);
    }
    Ok(MovementParams { p, q, s, v, d })
}

/// Coefficients of the mean-first-passage-time equation.
///
/// `phi` and `eta` are `f64::INFINITY` when `q D = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedCoefficients {
    /// `pv / (qD)`, 1/length.
    pub phi: f64,
    /// `1 / ((1 - s) qD)`, time/length^2.
    pub eta: f64,
    pub pe_effective_advection: f64,
    pub pe_effective_diffusion: f64,
}

impl DerivedCoefficients {
    pub fn phi_is_finite(&self) -> bool {
        self.phi.is_finite()
    }
}

pub fn derived_coefficients(params: &MovementParams) -> DerivedCoefficients {
    let adv = params.advection();
    let diff = params.diffusion();
    let (phi, eta) = if diff > 0.0 { (adv / diff, 1.0 / ((1.0 - params.s) * diff)) } else { (f64::INFINITY, f64::INFINITY) };
    DerivedCoefficients { phi, eta, pe_effective_advection: adv, pe_effective_diffusion: diff }
}

/// Rectangular enclosure `[0, a] x [-b/2, b/2]` with the goal wall at
/// `x = a` and a start point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnclosureGeometry {
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
}

impl EnclosureGeometry {
    pub fn new(a: f64, b: f64, x0: f64, y0: f64) -> Result<Self> {
        check_finite("a", a)?;
        check_finite("b", b)?;
        check_finite("x0", x0)?;
        check_finite("y0", y0)?;
        if a <= 0.0 {
            return Err(Error::InvalidParameter { field: "a", reason: format!("must be > 0 (got {a})") });
        }
        if b <= 0.0 {
            return Err(Error::InvalidParameter { field: "b", reason: format!("must be > 0 (got {b})") });
        }
        if !(0.0..=a).contains(&x0) {
            return Err(Error::InvalidParameter { field: "x0", reason: format!("out of [0, a] (got {x0})") });
        }
        if y0.abs() > b / 2.0 {
            return Err(Error::InvalidParameter { field: "y0", reason: format!("out of [-b/2, b/2] (got {y0})") });
        }
        Ok(Self { a, b, x0, y0 })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.a).contains(&x) && y.abs() <= self.b / 2.0
    }

    pub(crate) fn check_inside(&self, x: f64, y: f64) -> Result<()> {
        if self.contains(x, y) {
            Ok(())
        } else {
            Err(Error::OutsideEnclosure { x, y })
        }
    }

    pub(crate) fn check_x(&self, x: f64) -> Result<()> {
        if (0.0..=self.a).contains(&x) {
            Ok(())
        } else {
            Err(Error::OutsideEnclosure { x, y: f64::NAN })
        }
    }
}

/// Dimensionless coordinates: lengths in units of `2qD/(pv)`, time in
/// units of `4qD/(pv)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NondimScale {
    pub xi: f64,
    pub zeta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// `(length unit, time unit)` of the rescaling.
pub fn natural_scales(params: &MovementParams) -> Result<(f64, f64)> {
    let adv = params.advection();
    let diff = params.diffusion();
    if adv <= 0.0 || diff <= 0.0 {
        return Err(Error::ScalingUndefined);
    }
    let length = 2.0 * diff / adv;
    let time = 4.0 * diff / (adv * adv);
    Ok((length, time))
}

pub fn nondimensionalize(x: f64, y: f64, t: f64, params: &MovementParams, geom: &EnclosureGeometry) -> Result<NondimScale> {
    let (length, time) = natural_scales(params)?;
    Ok(NondimScale { xi: x / length, zeta: y / length, theta: t / time, alpha: geom.a / length, beta: geom.b / length })
}

/// Inverse of [`nondimensionalize`]; returns `(x, y, t)`.
pub fn dimensionalize(scale: &NondimScale, params: &MovementParams) -> Result<(f64, f64, f64)> {
    let (length, time) = natural_scales(params)?;
    Ok((scale.xi * length, scale.zeta * length, scale.theta * time))
}

/// One named species with its population count.
#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub params: MovementParams,
    pub population: u64,
}

/// Species competing for the goal wall. Names are unique and the list is
/// never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesEnsemble {
    entries: Vec<Species>,
}

impl SpeciesEnsemble {
    pub fn new(entries: Vec<Species>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidEnsemble("at least one species is required".into()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::InvalidEnsemble(format!("duplicate species name '{}'", e.name)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Species] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> Result<&Species> {
        self.entries.get(k).ok_or_else(|| Error::InvalidEnsemble(format!("species index {k} out of range (n = {})", self.len())))
    }

    pub fn total_population(&self) -> u64 {
        self.entries.iter().map(|e| e.population).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_averaged_walker_keeps_wall_clock_times() {
        let g = EnclosureGeometry::new(8.0, 3.0, 1.0, 0.0).unwrap();
        for &(p, s) in &[(0.3, 0.0), (0.5, 0.4), (0.9, 0.75)] {
            let m = MovementParams::new(p, s, 0.7, 0.3).unwrap();
            let avg = m.time_averaged();
            assert_eq!(avg.s(), 0.0);
            let (w, wa) = (crate::mfpt::mean_time_to_goal(&m, &g, 1.0).unwrap(), crate::mfpt::mean_time_to_goal(&avg, &g, 1.0).unwrap());
            assert!((w - wa).abs() < 1e-12 * w, "p={p} s={s}: {w} vs {wa}");
            let tm = crate::density::median_arrival_time(&m, &g, 1e-12).unwrap();
            let tw = crate::density::median_arrival_time(&avg, &g, 1e-12).unwrap();
            assert!((tw - tm / (1.0 - s)).abs() < 1e-9 * tw, "p={p} s={s}: {tw} vs {}", tm / (1.0 - s));
        }
    }

    #[test]
    fn complement_is_populated() {
        let m = validate_params(RawParams { p: 0.5, s: 0.0, v: 1.0, d: 1.0 }).unwrap();
        assert_eq!(m.q(), 0.5);
        assert_eq!(m.p() + m.q(), 1.0);
    }

    #[test]
    fn each_range_error_names_its_field() {
        let bad = |p, s, v, d| validate_params(RawParams { p, s, v, d }).unwrap_err();
        assert!(matches!(bad(1.2, 0.0, 1.0, 1.0), Error::InvalidParameter { field: "p", .. }));
        assert!(bad(1.2, 0.0, 1.0, 1.0).to_string().contains("p out of [0,1]"));
        assert!(matches!(bad(-0.1, 0.0, 1.0, 1.0), Error::InvalidParameter { field: "p", .. }));
        assert!(matches!(bad(0.5, 1.0, 1.0, 1.0), Error::InvalidParameter { field: "s", .. }));
        assert!(matches!(bad(0.5, 0.0, -1.0, 1.0), Error::InvalidParameter { field: "v", .. }));
        assert!(matches!(bad(0.5, 0.0, 1.0, -1.0), Error::InvalidParameter { field: "D", .. }));
        assert!(matches!(bad(f64::NAN, 0.0, 1.0, 1.0), Error::InvalidParameter { field: "p", .. }));
    }

    #[test]
    fn no_transport_is_rejected() {
        // p = 0 kills the advective rate, D = 0 the diffusive one.
        assert_eq!(validate_params(RawParams { p: 0.0, s: 0.0, v: 5.0, d: 0.0 }), Err(Error::NoTransport));
        assert_eq!(validate_params(RawParams { p: 1.0, s: 0.0, v: 0.0, d: 3.0 }), Err(Error::NoTransport));
        // one-sided degeneracy is allowed
        assert!(validate_params(RawParams { p: 1.0, s: 0.0, v: 1.0, d: 0.0 }).is_ok());
        assert!(validate_params(RawParams { p: 0.0, s: 0.0, v: 0.0, d: 1.0 }).is_ok());
    }

    #[test]
    fn derived_coefficients_canonical() {
        let m = MovementParams::new(0.5, 0.0, 1.0, 1.0).unwrap();
        let c = derived_coefficients(&m);
        // phi = 0.5*1/(0.5*1), eta = 1/(1*0.5)
        assert_eq!(c.phi, 1.0);
        assert_eq!(c.eta, 2.0);
        assert!(c.phi_is_finite());

        let still = MovementParams::new(0.5, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(derived_coefficients(&still).phi, 0.0);

        let ballistic = MovementParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let c = derived_coefficients(&ballistic);
        assert!(!c.phi_is_finite());
        assert!(c.eta.is_infinite());
    }

    #[test]
    fn rescaling_values() {
        let m = MovementParams::new(0.5, 0.0, 1.0, 1.0).unwrap();
        let g = EnclosureGeometry::new(100.0, 10.0, 0.0, 0.0).unwrap();
        let s = nondimensionalize(100.0, 0.0, 8.0, &m, &g).unwrap();
        assert_eq!(s.xi, 50.0);
        assert_eq!(s.theta, 1.0);
        let unit = nondimensionalize(2.0 * 0.5 / 0.5, 0.0, 0.0, &m, &g).unwrap();
        assert_eq!(unit.xi, 1.0);

        let still = MovementParams::new(0.5, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(nondimensionalize(1.0, 0.0, 1.0, &still, &g), Err(Error::ScalingUndefined));
        let ballistic = MovementParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(nondimensionalize(1.0, 0.0, 1.0, &ballistic, &g), Err(Error::ScalingUndefined));
    }

    #[test]
    fn geometry_checks() {
        assert!(EnclosureGeometry::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(EnclosureGeometry::new(1.0, 1.0, 1.5, 0.0).is_err());
        assert!(EnclosureGeometry::new(1.0, 1.0, 0.5, 0.6).is_err());
        let g = EnclosureGeometry::new(1.0, 1.0, 1.0, -0.5).unwrap();
        assert!(g.contains(1.0, 0.5));
        assert!(!g.contains(1.0 + 1e-12, 0.0));
    }

    #[test]
    fn ensemble_rejects_duplicates_and_empty() {
        let m = MovementParams::new(0.5, 0.0, 1.0, 1.0).unwrap();
        let sp = |n: &str| Species { name: n.into(), params: m, population: 1 };
        assert!(SpeciesEnsemble::new(vec![]).is_err());
        assert!(SpeciesEnsemble::new(vec![sp("a"), sp("a")]).is_err());
        let e = SpeciesEnsemble::new(vec![sp("a"), sp("b")]).unwrap();
        assert_eq!(e.total_population(), 2);
        assert!(e.get(2).is_err());
    }
}
