use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("singular matrix ({context}), condition estimate {condition:e}")]
    Singular { context: String, condition: f64 },

    #[error("no convergence after {iterations} iterations, residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("solution blew up at t = {last_valid_time}")]
    BlowUp { last_valid_time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
