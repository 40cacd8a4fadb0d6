use thiserror::Error;

/// Errors produced by the simulation, feature, classifier and metric routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("pointer-state integration diverged at t = {time:.3e} s")]
    IntegrationDiverged { time: f64 },

    #[error("singular covariance (condition number {condition:.3e})")]
    SingularCovariance { condition: f64 },

    #[error("degenerate filter kernel: {0}")]
    DegenerateKernel(String),

    #[error("SMO did not converge after {iterations} iterations (max KKT violation {violation:.3e})")]
    Convergence { iterations: usize, violation: f64 },

    #[error("fold {fold} has no samples of class {class}")]
    Stratification { fold: usize, class: i8 },

    #[error("assignment fidelity undefined: truth labels contain only class {0}")]
    UndefinedFidelity(u8),

    #[error("double-Gaussian fit failed: {0}")]
    FitFailed(String),

    #[error("no replacement trajectories available")]
    EmptyPool,

    #[error("unknown class label {0}")]
    UnknownLabel(u8),

    #[error("data format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
