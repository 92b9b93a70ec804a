//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A pseudo-inverse or Gram inverse is not well posed for the given
    /// pilot/antenna counts.
    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    /// Rank-deficient or otherwise degenerate numerical input.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure at iteration {iteration}: {what}")]
    NumericalFailure { what: String, iteration: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
