use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible for the requested operation.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Mathematical domain violation (log/div/sqrt of an invalid operand,
    /// non-finite values where finiteness is required).
    #[error("domain error: {0}")]
    Domain(String),

    /// A call-site contract was violated (preconditions on arguments).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An enumeration or budget cap was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Configuration file rejected.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint file rejected.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_shape(msg: impl Into<String>) -> Self {
        Error::InvalidShape(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
