use thiserror::Error;

use crate::qp::QpError;

pub type Result<T> = std::result::Result<T, FeltError>;

/// Errors surfaced by the estimation pipeline.
///
/// `DataError` and friends describe bad input; `Numerical` covers optimizer
/// and factorization failures. The CLI maps the two families onto distinct
/// exit codes.
#[derive(Debug, Error)]
pub enum FeltError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("no usable rows")]
    NoUsableRows,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("target {target} outside attainable range [{low}, {high}]")]
    OutOfRange { target: f64, low: f64, high: f64 },

    #[error("function is not strictly increasing; cannot invert")]
    NotInvertible,

    #[error("under-identified: {moments} households for {params} parameters")]
    UnderIdentified { moments: usize, params: usize },

    #[error("too many covariates for vertex constraints: {0} (max 10)")]
    TooManyCovariates(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("perfect separation detected in logit sample")]
    Separation,

    #[error("optimizer failed to converge: {0}")]
    NoConvergence(String),

    #[error("quadratic program: {0}")]
    Qp(#[from] QpError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl FeltError {
    /// True for failures that originate in the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FeltError::Qp(_)
                | FeltError::NoConvergence(_)
                | FeltError::Separation
                | FeltError::NotInvertible
        )
    }
}
