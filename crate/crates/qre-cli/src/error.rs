//! CLI error taxonomy mapped onto process exit codes.

use std::fmt;

/// Failure classes. Exit codes: usage/configuration/IO problems exit 1,
/// numeric failures inside a run exit 2, property-suite failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numeric error: {msg}"),
            CliError::Verification(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Usage(format!("io: {err}"))
    }
}

impl From<qre_core::Error> for CliError {
    fn from(err: qre_core::Error) -> Self {
        match err {
            qre_core::Error::Numeric(_) | qre_core::Error::NoConvergence(_) => {
                CliError::Numeric(err.to_string())
            }
            qre_core::Error::Dimension(_) | qre_core::Error::Parameter(_) => {
                CliError::Usage(err.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
