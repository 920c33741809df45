//! Batch front end: config parsing, subcommand drivers and report output.

pub mod commands;
pub mod config;
pub mod report;

use lndm::LndmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input, config or file system problems.
    #[error("{0}")]
    User(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    /// Prefixes the message with where the error arose.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::User(m) => CliError::User(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<LndmError> for CliError {
    fn from(e: LndmError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::User(e.to_string())
    }
}
