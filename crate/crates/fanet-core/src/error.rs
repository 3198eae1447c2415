use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of tensors, layers, or feature vectors do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input rejected before any work started (bad image, bad parameters).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input is structurally fine but numerically degenerate (e.g. all-zero
    /// samples handed to a distribution fitter).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A model was used before it was trained or loaded.
    #[error("model not ready: {0}")]
    ModelNotReady(String),

    /// Training diverged or a labeled class emptied out.
    #[error("training failed: {0}")]
    TrainingFailed(String),

    /// A file did not match its documented format.
    #[error("format error: {0}")]
    Format(String),

    /// A metric has no defined value on the given partition.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
