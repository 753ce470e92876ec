use std::process::ExitCode;

use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or an invalid configuration (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Missing, unreadable or malformed input (exit 2).
    #[error("{0}")]
    Input(String),
    /// The simulator caught itself breaking a codec invariant (exit 3).
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 3,
        })
    }

    pub fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {e}"))
    }
}

impl From<busenc::Error> for CliError {
    fn from(e: busenc::Error) -> Self {
        use busenc::Error as E;
        match e {
            E::Config(c) => CliError::Usage(c.to_string()),
            E::Codec(_) | E::Invariant(_) => CliError::Invariant(e.to_string()),
            E::Trace(_) | E::Quality(_) | E::Io(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<busenc::error::ConfigError> for CliError {
    fn from(e: busenc::error::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
