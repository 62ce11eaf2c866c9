use thiserror::Error;

/// Every failure the core crate can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("no sign change of the derivative within |u| <= {limit:e}")]
    BracketFailure { limit: f64 },

    #[error("probability {0} lies outside (0, 1)")]
    DomainError(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("outcome recorded out of order at step {step}")]
    OutOfOrder { step: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },

    #[error("covariate matrix is rank deficient (smallest scaled eigenvalue {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("OLS residuals of arm {arm} are degenerate (E = {e:e})")]
    DegenerateResiduals { arm: u8, e: f64 },

    #[error("horizon must be even for this construction, got T = {0}")]
    TOdd(usize),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    ParseError { row: usize, column: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
