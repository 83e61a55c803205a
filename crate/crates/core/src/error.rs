use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps `Parameter`, `Contract`, `DeletionEvent` and `Io` to exit
/// code 1 and `Singular` to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("active Gram matrix is rank deficient at step {step} (column {column})")]
    Singular { step: usize, column: usize },

    #[error("the {0}-th path event is a deletion; the covariance statistic is defined for entering events only")]
    DeletionEvent(usize),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
