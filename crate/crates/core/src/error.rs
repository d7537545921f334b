use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum RcdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("training diverged at step {step}: {reason}")]
    TrainingFailure { step: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RcdError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RcdError::InvalidArgument(msg.into()))
}
