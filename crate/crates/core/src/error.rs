use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("profile is not non-decreasing: g({next_radius}) = {next_value} < g({radius}) = {value}")]
    Monotonicity {
        radius: f64,
        value: f64,
        next_radius: f64,
        next_value: f64,
    },

    #[error("profile value g({radius}) = {value} is below 1")]
    BelowOne { radius: f64, value: f64 },

    #[error("malformed profile table: {0}")]
    Table(String),

    #[error("threshold equation residual {residual:e} exceeds tolerance {tol:e} at s = {s}")]
    ToleranceNotMet { s: f64, residual: f64, tol: f64 },

    #[error("operation requires a {expected} threshold model, found {found}")]
    Classification {
        expected: &'static str,
        found: &'static str,
    },

    #[error("points must be distinct")]
    CoincidentPoints,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("symmetric eigensolver did not converge within {max_iterations} iterations")]
    EigenNoConvergence { max_iterations: usize },

    #[error("model cache: {0}")]
    Cache(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "stability index must lie in (0, 2)",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be strictly positive and finite",
        })
    }
}
