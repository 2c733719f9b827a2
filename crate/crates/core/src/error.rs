use nalgebra::DVector;
use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state encountered at t = {t}")]
    BlowUp { t: f64 },

    #[error("transported differential is singular (condition estimate {condition:.3e})")]
    SingularJacobian { condition: f64 },

    #[error("boundary condition of the covering argument fails at x = {point:?} (|g(x) - x| = {displacement:.3e}, |x - p| = {radius:.3e})")]
    BoundaryCondition {
        point: Vec<f64>,
        displacement: f64,
        radius: f64,
    },

    #[error("root search exhausted its budget; best residual {best_residual:.3e}")]
    RootBudget {
        best_residual: f64,
        best: DVector<f64>,
    },

    #[error("time {t} is a switch time of the control, not a Lebesgue time")]
    SwitchTime { t: f64 },

    #[error("needle interval [{lo}, {hi}] {reason}")]
    NeedleInterval { lo: f64, hi: f64, reason: String },

    #[error("vector is not in the interior of the cone")]
    NotInterior,

    #[error("the supremum of the Hamiltonian over the control set is unbounded")]
    UnboundedHamiltonian,

    #[error("system is already extended with a cost coordinate")]
    AlreadyExtended,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("geometric routes disagree: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
