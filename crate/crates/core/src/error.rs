use thiserror::Error;

/// Errors raised anywhere in the estimation stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The total posterior weight vanished or became non-finite.
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("matrix is not invertible (condition number {condition:e})")]
    NonInvertible { condition: f64 },

    /// A replayed sample was recorded at a different LO phase than the one
    /// the protocol planned.
    #[error("schedule mismatch at sample {index}: planned theta {planned}, recorded {recorded}")]
    ScheduleMismatch {
        index: usize,
        planned: f64,
        recorded: f64,
    },

    #[error("data source exhausted after {0} samples")]
    SourceExhausted(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
