use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate diffusion coefficient {value} on element {element}")]
    DegenerateCoefficient { element: usize, value: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("circulant embedding has negative eigenvalue {min_eigenvalue:.3e}; retry with padding factor {suggested_padding}")]
    NonPositiveEmbedding {
        min_eigenvalue: f64,
        suggested_padding: usize,
    },

    #[error("sensor {index} is numerically dependent on the preceding sensors (Gram condition > 1e12)")]
    DependentSensors { index: usize },

    #[error("reduced space is invisible from the measurement space (infinite inf-sup constant)")]
    UnrecoverableSpace,

    #[error("metric is undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 config, 3 artifact mismatch, 4 data format, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::ArtifactMismatch(_) => 3,
            Error::Format(_) => 4,
            _ => 1,
        }
    }
}
