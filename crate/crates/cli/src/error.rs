use thiserror::Error;

use crate::rows::RowError;
use crate::scenario::ParseError;

/// Failures of a command, each mapped to a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid scenario: {0}")]
    Domain(#[from] dp_market_core::Error),
    #[error("output: {0}")]
    Output(#[from] RowError),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) | CliError::Io { .. } | CliError::Parse(_) | CliError::Output(_) => 2,
            CliError::Domain(_) => 3,
        }
    }
}
