use std::path::PathBuf;

use pontryagin::Error as LibError;

/// Every way a command can stop, sorted by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A check ran and at least one condition failed.
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl From<LibError> for CliError {
    fn from(e: LibError) -> Self {
        match e {
            LibError::BlowUp { .. }
            | LibError::SingularJacobian { .. }
            | LibError::RootBudget { .. }
            | LibError::BoundaryCondition { .. }
            | LibError::UnboundedHamiltonian
            | LibError::Inconsistent(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
