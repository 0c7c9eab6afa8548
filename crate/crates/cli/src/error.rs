use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Library(#[from] kmono::Error),

    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    /// 2 for anything the caller can fix in the input or configuration,
    /// 1 otherwise.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) | CliError::Config(_) => ExitCode::from(2),
            CliError::Library(kmono::Error::InvalidInput(_) | kmono::Error::Domain(_)) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
