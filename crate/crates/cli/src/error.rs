use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or inputs that cannot be used at all. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Config file that does not parse or validate. Exit code 2.
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(format!("writing table: {e}"))
    }
}
