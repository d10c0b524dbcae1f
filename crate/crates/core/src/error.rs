use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point kind does not match metric `{metric}`")]
    PointKindMismatch { metric: &'static str },

    #[error("tuples define different component sets")]
    MismatchedComponents,

    #[error("component {0} is not registered")]
    UnregisteredComponent(u32),

    #[error("component {0} is already registered")]
    DuplicateComponent(u32),

    #[error("component {0} is missing from the data tuple")]
    MissingComponent(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mechanism not applicable: {0}")]
    MechanismNotApplicable(String),

    #[error("index {got} out of range (1..={len})")]
    IndexOutOfRange { got: usize, len: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
