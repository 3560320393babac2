use thiserror::Error;

/// Errors surfaced by the library.
///
/// Mathematical refutations are *not* errors; they come back as verdicts and
/// witnesses inside reports. Errors cover invalid parameters, unreadable
/// inputs and non-finite evaluations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("defining function returned a non-finite value at jet {jet}")]
    Evaluation { jet: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("search exhausted: {0}")]
    NotFound(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
