//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violates its documented range or divisibility rule.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Operand shapes do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A matrix that must be Hermitian positive definite was numerically singular.
    #[error("singular matrix in {0}")]
    SingularMatrix(&'static str),

    /// The power-dual bisection could not bracket a root.
    #[error("bisection bracketing failed: {0}")]
    BisectionBracket(String),

    /// An input that must be nonzero (e.g. the PAPR numerator) was zero.
    #[error("degenerate input in {0}")]
    DegenerateInput(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
