use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular Jacobian of the torus diffeomorphism at {at:?}")]
    SingularJacobian { at: Vec<f64> },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("step size underflow at t = {t} (h = {h:e}); the field is likely stiff near a zero")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("maximum number of integrator steps ({0}) exceeded")]
    MaxStepsExceeded(usize),

    #[error("scalar field vanishes on the line (min {value:e} at s = {at})")]
    VanishesOnLine { at: f64, value: f64 },

    #[error("field vanishes on the torus (min |value| = {min:e})")]
    VanishingField { min: f64 },

    #[error("grid resolution {resolution}^{dim} exceeds the 1e8 bin limit")]
    ResolutionOverflow { resolution: usize, dim: usize },

    #[error("trajectory is empty or has zero horizon")]
    EmptyTrajectory,

    #[error("quadrature did not reach relative tolerance {tolerance:e} (last change {change:e})")]
    QuadratureNotConverged { tolerance: f64, change: f64 },
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
