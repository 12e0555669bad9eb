use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("exponent p must lie in (0, 1], got {0}")]
    Exponent(f64),
    #[error("scale {name} must be finite and positive, got {value}")]
    Scale { name: &'static str, value: f64 },
    #[error("threshold c must be finite and positive, got {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("entry ({row}, {col}) outside a {m}x{n} matrix")]
    OutOfBounds { row: usize, col: usize, m: usize, n: usize },
    #[error("entry ({row}, {col}) given more than once")]
    Duplicate { row: usize, col: usize },
    #[error("observed index set is empty")]
    Empty,
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("index sets differ")]
    MaskMismatch,
    #[error("{factor} Gram matrix is rank deficient (reciprocal condition estimate {rcond:e})")]
    RankDeficient { factor: &'static str, rcond: f64 },
    #[error("nonzero {factor} direction vanishes on the observed set")]
    DegenerateDirection { factor: &'static str },
}

/// Top-level error for solver and experiment entry points.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
