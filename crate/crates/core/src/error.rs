//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The input is well-formed but degenerate (e.g. a zero vector to normalize).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Inconsistent or infeasible configuration.
    #[error("config error: {0}")]
    Config(String),
    /// A non-finite value appeared during a computation.
    #[error("numeric error at {location}: {detail}")]
    Numeric { location: String, detail: String },
    /// An operation was called out of order.
    #[error("usage error: {0}")]
    Usage(String),
    /// Parameter vectors exchanged between clients and server do not line up.
    #[error("transport error: {0}")]
    Transport(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
