use glmm_design::DesignError;
use thiserror::Error;

/// Failures surfaced by the command-line front end, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn field(path: &str, msg: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{path}: {msg}"))
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        use DesignError::*;
        let msg = e.to_string();
        match e {
            NoFeasibleDesign
            | SingularReference(_)
            | NotPositiveDefinite(_)
            | SingularCovariance { .. }
            | Overflow { .. }
            | NonFiniteIntegrand { .. }
            | IllConditioned { .. } => CliError::Infeasible(msg),
            Io(_) => CliError::Io(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
