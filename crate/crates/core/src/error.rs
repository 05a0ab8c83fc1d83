use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes or settings that can never work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// An API called out of order or with arguments outside its contract.
    #[error("usage error: {0}")]
    Usage(String),
    /// Non-finite values during optimization; the update was not applied.
    #[error("training error: {0}")]
    Training(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }
}
