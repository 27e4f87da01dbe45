//! Multi-species arrival statistics at the goal wall.
//!
//! Every species starts from the same point. Arrival by time `t` is the
//! event that the free x-process has passed `x = a`, with probability
//! `Q_i(t)`, and species are independent. Placement probabilities compare
//! positions beyond the wall at time `t`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{passing_probability, x_marginal_free};
use crate::error::{Error, Result};
use crate::model::{EnclosureGeometry, MovementParams, SpeciesEnsemble};
use crate::numerics::integrate_adaptive_points;

/// Closeness to 0 or 1 at which a placement denominator counts as singular.
pub const DEGENERATE_Q: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositionOptions {
    /// Arrival probabilities below this are raised to it before dividing.
    pub floor: f64,
}

impl Default for CompositionOptions {
    fn default() -> Self {
        Self { floor: 1e-4 }
    }
}

impl CompositionOptions {
    pub fn new(floor: f64) -> Result<Self> {
        if floor > 0.0 && floor < 1.0 {
            Ok(Self { floor })
        } else {
            Err(Error::InvalidParameter { field: "floor", reason: format!("out of (0,1) (got {floor})") })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceKind {
    ArrivalCdf,
    FirstPlace,
    Composition,
    SecondPlace,
    ThirdPlace,
    Neither,
    AllArrived,
}

impl RaceKind {
    pub const ALL: [RaceKind; 7] = [
        RaceKind::ArrivalCdf,
        RaceKind::FirstPlace,
        RaceKind::Composition,
        RaceKind::SecondPlace,
        RaceKind::ThirdPlace,
        RaceKind::Neither,
        RaceKind::AllArrived,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RaceKind::ArrivalCdf => "arrival_cdf",
            RaceKind::FirstPlace => "first_place",
            RaceKind::Composition => "composition",
            RaceKind::SecondPlace => "second_place",
            RaceKind::ThirdPlace => "third_place",
            RaceKind::Neither => "neither",
            RaceKind::AllArrived => "all_arrived",
        }
    }
}

impl fmt::Display for RaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RaceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter { field: "kind", reason: format!("unknown race quantity '{s}'") })
    }
}

/// One named series of a race curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// One quantity over the time grid. Per-species kinds carry one series per
/// species; `neither` and `all_arrived` carry a single series named `all`.
/// Placement values are NaN at times where their denominators are singular.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceCurve {
    pub kind: RaceKind,
    pub times: Vec<f64>,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RaceOptions {
    pub composition: CompositionOptions,
    /// Absolute tolerance of the placement integrals.
    pub quad_tol: f64,
}

impl Default for RaceOptions {
    fn default() -> Self {
        Self { composition: CompositionOptions::default(), quad_tol: 1e-12 }
    }
}

/// Probability that a species has reached the goal wall by time `t`.
pub fn arrival_cdf(species: &MovementParams, geom: &EnclosureGeometry, t: f64) -> f64 {
    crate::density::q_redistributed(t, species, geom)
}

/// Probability that the free x-process of a species lies beyond `x`.
pub fn passing_cdf(species: &MovementParams, geom: &EnclosureGeometry, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(passing_probability(x, t, species, geom.x0))
}

/// Outcomes of a two-species race at time `t`; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairOutcomes {
    /// Species 1 arrived, species 2 not yet.
    pub first: f64,
    /// Species 2 arrived, species 1 not yet.
    pub second: f64,
    pub neither: f64,
    pub both: f64,
}

pub fn pair_outcomes(s1: &MovementParams, s2: &MovementParams, geom: &EnclosureGeometry, t: f64) -> PairOutcomes {
    let q1 = arrival_cdf(s1, geom, t);
    let q2 = arrival_cdf(s2, geom, t);
    PairOutcomes { first: q1 * (1.0 - q2), second: q2 * (1.0 - q1), neither: (1.0 - q1) * (1.0 - q2), both: q1 * q2 }
}

/// Probability that species 1 has arrived and species 2 has not.
pub fn prob_first_two(s1: &MovementParams, s2: &MovementParams, geom: &EnclosureGeometry, t: f64) -> f64 {
    pair_outcomes(s1, s2, geom, t).first
}

fn arrivals(ensemble: &SpeciesEnsemble, geom: &EnclosureGeometry, t: f64) -> Vec<f64> {
    ensemble.entries().iter().map(|s| arrival_cdf(&s.params, geom, t)).collect()
}

fn first_from(q: &[f64], k: usize) -> f64 {
    q.iter().enumerate().fold(q[k], |acc, (i, &qi)| if i == k { acc } else { acc * (1.0 - qi) })
}

/// Probability that species `k` is the only one to have arrived by `t`.
pub fn prob_first_of_n(ensemble: &SpeciesEnsemble, k: usize, geom: &EnclosureGeometry, t: f64) -> Result<f64> {
    ensemble.get(k)?;
    Ok(first_from(&arrivals(ensemble, geom, t), k))
}

fn composition_from(ensemble: &SpeciesEnsemble, q: &[f64], opts: &CompositionOptions) -> Result<Vec<f64>> {
    if ensemble.total_population() == 0 {
        return Err(Error::InvalidEnsemble("composition needs a positive total population".into()));
    }
    let weights: Vec<f64> = ensemble.entries().iter().zip(q).map(|(s, &qi)| s.population as f64 * qi.max(opts.floor)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Population-weighted share of arrivals per species.
pub fn composition(ensemble: &SpeciesEnsemble, geom: &EnclosureGeometry, t: f64, opts: &CompositionOptions) -> Result<Vec<f64>> {
    composition_from(ensemble, &arrivals(ensemble, geom, t), opts)
}

/// `int_a^inf P_k(x, t) prod_{i in others} Q_i(x, t) dx`: the probability that
/// species `k` lies beyond the wall and behind each species in `others`.
pub fn placement_integral(
    ensemble: &SpeciesEnsemble,
    k: usize,
    others: &[usize],
    geom: &EnclosureGeometry,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let lead = ensemble.get(k)?.params;
    let chasers = others.iter().map(|&i| ensemble.get(i).map(|s| s.params)).collect::<Result<Vec<_>>>()?;
    let x0 = geom.x0;
    let behind = |x: f64| chasers.iter().map(|p| passing_probability(x, t, p, x0)).product::<f64>();

    let centre = x0 + lead.advection() * t;
    if lead.diffusion() == 0.0 {
        // point mass at the drift front
        return Ok(if centre > geom.a { behind(centre) } else { 0.0 });
    }
    let width = (4.0 * lead.diffusion() * t).sqrt();
    let hi = geom.a.max(centre) + 10.0 * width;
    let mut points = vec![geom.a, hi];
    // breakpoints at the lead peak and at any step in a chaser's passing curve
    points.push(centre);
    for p in &chasers {
        if p.diffusion() == 0.0 {
            points.push(x0 + p.advection() * t);
        }
    }
    points.retain(|&x| x >= geom.a && x <= hi);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let r = integrate_adaptive_points(|x| x_marginal_free(x, t, &lead, x0).unwrap_or(0.0) * behind(x), &points, tol)?;
    Ok(r.value)
}

fn check_lead(k: usize, qk: f64) -> Result<()> {
    if qk <= DEGENERATE_Q || qk >= 1.0 - DEGENERATE_Q {
        Err(Error::DegenerateDenominator { species: k, q: qk })
    } else {
        Ok(())
    }
}

fn check_other(i: usize, qi: f64) -> Result<()> {
    if 1.0 - qi <= DEGENERATE_Q {
        Err(Error::DegenerateDenominator { species: i, q: qi })
    } else {
        Ok(())
    }
}

fn second_from(ensemble: &SpeciesEnsemble, q: &[f64], k: usize, geom: &EnclosureGeometry, t: f64, tol: f64) -> Result<f64> {
    check_lead(k, q[k])?;
    let none: f64 = q.iter().map(|qi| 1.0 - qi).product();
    let scale = none / (q[k] * (1.0 - q[k]));
    let mut sum = 0.0;
    for i in (0..q.len()).filter(|&i| i != k) {
        check_other(i, q[i])?;
        sum += placement_integral(ensemble, k, &[i], geom, t, tol)? / (1.0 - q[i]);
    }
    Ok(sum * scale)
}

fn third_from(ensemble: &SpeciesEnsemble, q: &[f64], k: usize, geom: &EnclosureGeometry, t: f64, tol: f64) -> Result<f64> {
    if q.len() < 3 {
        return Err(Error::InvalidEnsemble(format!("third place needs at least 3 species (got {})", q.len())));
    }
    check_lead(k, q[k])?;
    let none: f64 = q.iter().map(|qi| 1.0 - qi).product();
    let scale = none / (q[k] * (1.0 - q[k]));
    let mut sum = 0.0;
    for i in (0..q.len()).filter(|&i| i != k) {
        check_other(i, q[i])?;
        for j in (0..q.len()).filter(|&j| j != k && j != i) {
            let integral = placement_integral(ensemble, k, &[i, j], geom, t, tol)?;
            sum += integral / ((1.0 - q[i]) * (1.0 - q[j]));
        }
    }
    Ok(sum * scale)
}

/// Second-place probability of species `k` by the position-order formula.
pub fn prob_second(ensemble: &SpeciesEnsemble, k: usize, geom: &EnclosureGeometry, t: f64, tol: f64) -> Result<f64> {
    ensemble.get(k)?;
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    second_from(ensemble, &arrivals(ensemble, geom, t), k, geom, t, tol)
}

/// Third-place probability of species `k`; needs at least three species.
pub fn prob_third(ensemble: &SpeciesEnsemble, k: usize, geom: &EnclosureGeometry, t: f64, tol: f64) -> Result<f64> {
    ensemble.get(k)?;
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    third_from(ensemble, &arrivals(ensemble, geom, t), k, geom, t, tol)
}

fn placement_or_nan(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::DegenerateDenominator { .. }) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Evaluates each requested quantity on an ascending grid of positive times.
pub fn race_curves(
    ensemble: &SpeciesEnsemble,
    geom: &EnclosureGeometry,
    times: &[f64],
    kinds: &[RaceKind],
    opts: &RaceOptions,
) -> Result<Vec<RaceCurve>> {
    if times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter { field: "times", reason: "must be positive and finite".into() });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter { field: "times", reason: "must be strictly ascending".into() });
    }
    let n = ensemble.len();
    let names: Vec<String> = ensemble.entries().iter().map(|s| s.name.clone()).collect();
    let qs: Vec<Vec<f64>> = times.iter().map(|&t| arrivals(ensemble, geom, t)).collect();

    let mut curves = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        // rows[time][series]
        let rows: Vec<Vec<f64>> = match kind {
            RaceKind::ArrivalCdf => qs.clone(),
            RaceKind::FirstPlace => qs.iter().map(|q| (0..n).map(|k| first_from(q, k)).collect()).collect(),
            RaceKind::Composition => qs.iter().map(|q| composition_from(ensemble, q, &opts.composition)).collect::<Result<_>>()?,
            RaceKind::Neither => qs.iter().map(|q| vec![q.iter().map(|qi| 1.0 - qi).product()]).collect(),
            RaceKind::AllArrived => qs.iter().map(|q| vec![q.iter().product()]).collect(),
            RaceKind::SecondPlace | RaceKind::ThirdPlace => {
                if kind == RaceKind::ThirdPlace && n < 3 {
                    return Err(Error::InvalidEnsemble(format!("third place needs at least 3 species (got {n})")));
                }
                times
                    .par_iter()
                    .zip(qs.par_iter())
                    .map(|(&t, q)| {
                        (0..n)
                            .map(|k| {
                                placement_or_nan(if kind == RaceKind::SecondPlace {
                                    second_from(ensemble, q, k, geom, t, opts.quad_tol)
                                } else {
                                    third_from(ensemble, q, k, geom, t, opts.quad_tol)
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?
            }
        };
        let series_names: Vec<String> = match kind {
            RaceKind::Neither | RaceKind::AllArrived => vec!["all".to_string()],
            _ => names.clone(),
        };
        let series =
            series_names.into_iter().enumerate().map(|(j, name)| Series { name, values: rows.iter().map(|r| r[j]).collect() }).collect();
        curves.push(RaceCurve { kind, times: times.to_vec(), series });
    }
    Ok(curves)
}
