use std::fmt;

use hyperreg_core::Error;

/// CLI failure, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input or parameters outside their valid range.
    Input(String),
    /// A numerical solve or simulation blew up.
    Divergence(String),
    /// The requested tuning is not admissible.
    Infeasible(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Divergence(m) => write!(f, "numerical failure: {m}"),
            CliError::Infeasible(m) => write!(f, "not admissible: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parameter(_) | Error::Signal(_) => CliError::Input(msg),
            Error::Solver { .. } | Error::Divergence { .. } => CliError::Divergence(msg),
            Error::Domain(_) | Error::Configuration(_) => CliError::Infeasible(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
