use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the range an operation accepts.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A value is outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested computation exceeds a built-in resource limit.
    #[error("resource limit: {0}")]
    Resource(String),
    /// An internal consistency check failed (signals a bug, not bad input).
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn resource(msg: impl Into<String>) -> Error {
    Error::Resource(msg.into())
}
