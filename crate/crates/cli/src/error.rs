//! Failure classes and their process exit codes.

use std::fmt;

use phamp_core::Error;

#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit 2).
    Config(String),
    /// Solver, integrator or file failure (exit 3).
    Numerical(String),
    /// Continuation stopped at a family boundary before `q_max` (exit 4).
    Boundary(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Boundary(_) => 4,
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        Self::Numerical(format!("{what}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Boundary(m) => write!(f, "family boundary: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) | Error::Unsupported(_) | Error::InvalidMode(_) | Error::Dimension { .. } => {
                Self::Config(e.to_string())
            }
            Error::FamilyBoundary { .. } => Self::Boundary(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}
