//! Standard-library companion of `fedgen-core`: experiment configuration
//! files, tensor/checkpoint IO, CSV report emission, and the `fedgen`
//! command-line interface.

pub mod cli;
pub mod compare;
pub mod config;
pub mod files;
pub mod reports;
pub mod runs;

use std::process::ExitCode;

/// Process-level error classification; the variants map onto the CLI exit
/// codes (2 = configuration, 3 = data, 4 = runtime).
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            AppError::Config(_) => ExitCode::from(2),
            AppError::Data(_) => ExitCode::from(3),
            AppError::Runtime(_) => ExitCode::from(4),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        AppError::Data(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        AppError::Runtime(msg.into())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<fedgen_core::FormatError> for AppError {
    fn from(e: fedgen_core::FormatError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<fedgen_core::CoreError> for AppError {
    fn from(e: fedgen_core::CoreError) -> Self {
        AppError::Runtime(e.to_string())
    }
}
