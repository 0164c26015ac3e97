use thiserror::Error;

/// Coarse classification used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Argument,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("entry {index} must be strictly positive, got {value}")]
    NonPositive { index: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("pairwise estimation failed for pair ({i}, {j}): {reason}")]
    PairEstimation { i: usize, j: usize, reason: String },

    #[error("linear solve failed: {reason} (condition estimate {condition:.3e})")]
    Solve { reason: String, condition: f64 },

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("GPD fit failed: {0}")]
    Fit(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::ShapeMismatch { .. } | Error::NonPositive { .. } | Error::Domain(_) => {
                ErrorKind::Argument
            }
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorKind::Io,
            _ => ErrorKind::Numeric,
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch { expected: expected.to_string(), got: got.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
