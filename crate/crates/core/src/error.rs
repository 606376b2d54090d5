use thiserror::Error;

/// Failure classes shared by every model in the crate.
///
/// `InvalidInput` covers anything the caller can fix by changing arguments;
/// the other variants mean the numerics themselves gave up.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("eigenstate labeling failed: {0}")]
    Labeling(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
