use thiserror::Error;

/// Unified error type for the whole library.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor shape is malformed on its own (zero dim, empty shape,
    /// length/shape disagreement).
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Two or more shapes that must agree do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A parameter value outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// An analytic gradient disagreed with finite differences, or a forward
    /// pass under check produced non-finite values.
    #[error("gradient check failed: {0}")]
    GradCheckFailure(String),

    /// The optimizer refused a step (non-finite gradients); parameters were
    /// left untouched.
    #[error("optimizer error: {0}")]
    OptimizerError(String),

    /// Malformed input data. `offset` is the byte position where parsing
    /// failed, when the decoder can pinpoint one.
    #[error("data error: {msg}{}", offset.map(|o| format!(" (byte {o})")).unwrap_or_default())]
    DataError { msg: String, offset: Option<usize> },

    /// A checkpoint file is malformed, truncated, or was written by an
    /// incompatible model configuration.
    #[error("checkpoint error: {0}")]
    CheckpointError(String),

    /// A config file or override could not be parsed or names an unknown key.
    #[error("config error: {0}")]
    ConfigError(String),

    /// Training aborted because a loss went non-finite. The last good
    /// checkpoint (if any) has already been written.
    #[error("training diverged at step {step}: {msg}")]
    Divergence { step: u64, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::DataError { msg: msg.into(), offset: None }
    }

    pub fn data_at(msg: impl Into<String>, offset: usize) -> Self {
        Error::DataError { msg: msg.into(), offset: Some(offset) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
