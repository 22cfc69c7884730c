use std::fmt::Display;
use std::process::ExitCode;

use thiserror::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing or mismatched files.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input that exists but does not parse or validate.
    #[error("data error: {0}")]
    Data(String),
    /// Failures while doing the work: divergence, write errors.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        })
    }

    pub fn config(e: impl Display) -> Self {
        Self::Config(e.to_string())
    }

    pub fn data(e: impl Display) -> Self {
        Self::Data(e.to_string())
    }

    pub fn runtime(e: impl Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
