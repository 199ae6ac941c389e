//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("path has a jump at sample {0}; a continuous path is required")]
    UnexpectedJump(usize),

    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("particle {particle}: {source}")]
    Particle { particle: usize, source: Box<Error> },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures raised by a numerical computation (as opposed to
    /// bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BlowUp { .. } | Error::DegenerateWeights(_) | Error::Singular(_) => true,
            Error::Particle { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
