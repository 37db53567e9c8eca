use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable or malformed files, invalid parameters,
    /// mismatched shapes.
    #[error("{0}")]
    Config(String),

    /// The pipeline ran but could not produce a finite answer.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(1),
            CliError::Numerical(_) => ExitCode::from(2),
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{}: {err}", path.display()))
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl From<shpsd::Error> for CliError {
    fn from(err: shpsd::Error) -> Self {
        match err {
            shpsd::Error::Singular(_) | shpsd::Error::Numerical(_) => CliError::Numerical(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach a path to any displayable error.
pub trait WithPath<T> {
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T, E: std::fmt::Display> WithPath<T> for Result<T, E> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| CliError::io(path, e))
    }
}
