//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by dataset handling, network evaluation and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix/vector dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numeric argument violates a precondition (non-finite, out of range).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Manifest or feature schema inconsistency.
    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed or inconsistent data files.
    #[error("data error: {0}")]
    Data(String),

    /// An operation was called before its prerequisites (e.g. unfitted scaler).
    #[error("state error: {0}")]
    State(String),

    /// Training hit a non-recoverable condition (non-finite objective).
    #[error("training aborted: {0}")]
    TrainingAbort(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn abort(msg: impl Into<String>) -> Self {
        Error::TrainingAbort(msg.into())
    }
}
