use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("resource guard: {what} needs {needed} but the limit is {limit}")]
    ResourceGuard {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("empty index set: {0}")]
    EmptyIndexSet(String),

    #[error("linear algebra backend failed: {0}")]
    Backend(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
