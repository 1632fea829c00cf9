//! Command implementations for the `ppl` binary.

pub mod bench;
pub mod commands;
pub mod model;
pub mod run;
pub mod summary;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or an algorithm the model does not support.
    #[error("{0}")]
    Usage(String),
    /// Parse, analysis or execution failure.
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Model(_) | CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
