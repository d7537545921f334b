use std::path::PathBuf;

use rcd_core::RcdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error(transparent)]
    Core(RcdError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<RcdError> for CliError {
    fn from(e: RcdError) -> Self {
        match e {
            RcdError::Parse(m) => CliError::Parse(m),
            RcdError::DimensionMismatch(m) => CliError::DimensionMismatch(m),
            RcdError::InvalidArgument(m) => CliError::InvalidArgument(m),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile(_) => 2,
            CliError::Parse(_) => 3,
            CliError::DimensionMismatch(_) => 4,
            CliError::InvalidArgument(_) => 5,
            CliError::ReplayMismatch(_) => 6,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::MissingFile(_) => "missing-file",
            CliError::Parse(_) => "parse",
            CliError::DimensionMismatch(_) => "dimension-mismatch",
            CliError::InvalidArgument(_) => "invalid-argument",
            CliError::ReplayMismatch(_) => "replay-mismatch",
            CliError::Core(_) => "runtime",
            CliError::Io(_) => "io",
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
