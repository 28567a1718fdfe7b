use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("slice index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("newton solve failed at time step {step}: residual {residual:e} after {iterations} iterations")]
    NewtonFailed {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("linear solve failed: zero pivot at row {row}")]
    SingularPivot { row: usize },

    #[error("nonlinearity has no truncation level")]
    MissingTruncation,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
