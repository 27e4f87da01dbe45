use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{field} {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("no transport: p*v = 0 and q*D = 0")]
    NoTransport,

    #[error("point ({x}, {y}) lies outside the enclosure")]
    OutsideEnclosure { x: f64, y: f64 },

    #[error("rescaling undefined: requires p*v > 0 and q*D > 0")]
    ScalingUndefined,

    #[error("degenerate rates: {0}")]
    DegenerateRates(&'static str),

    #[error("time must be positive (got {0}); the initial condition is a point mass")]
    NonPositiveTime(f64),

    #[error("invalid bracket: f({lo}) = {f_lo} and f({hi}) = {f_hi} have the same sign")]
    InvalidBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("no convergence after {iterations} iterations (last estimate {estimate})")]
    MaxIterations { iterations: usize, estimate: f64 },

    #[error("quadrature did not converge: value {value}, error estimate {error} after {evaluations} evaluations")]
    QuadratureNonConvergence { value: f64, error: f64, evaluations: usize },

    #[error("omega = {omega} is outside the attainable range (0, 1/p) for p = {p}")]
    OmegaOutOfRange { omega: f64, p: f64 },

    #[error("omega = 1/p corresponds to an infinite Peclet number")]
    InfinitePeclet,

    #[error("degenerate denominator in the placement formula (species {species}, Q = {q})")]
    DegenerateDenominator { species: usize, q: f64 },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for failures of an iterative or numerical procedure, as opposed
    /// to rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::MaxIterations { .. } | Error::QuadratureNonConvergence { .. } | Error::DegenerateDenominator { .. })
    }
}
