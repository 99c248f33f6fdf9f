use thiserror::Error;

/// Errors produced by model construction, inference, optimization and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input value violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A symmetric factorization failed even after diagonal-jitter escalation.
    #[error("factorization of {what} failed: matrix is not positive definite")]
    Factorization { what: &'static str },

    /// An evidence term evaluated to NaN or infinity.
    #[error("non-finite value in {term} while evaluating the marginal likelihood")]
    NonFinite { term: &'static str },

    /// A structured text file could not be parsed.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
