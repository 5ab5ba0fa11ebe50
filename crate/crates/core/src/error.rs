use thiserror::Error;

/// Errors raised by the probability engines, the simulator and the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid power allocation: {0}")]
    InvalidPower(String),

    #[error("unsupported configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no root found: {0}")]
    NoRoot(String),

    /// Iterative routine stopped before reaching its tolerance.
    #[error("numerical failure in {what} (best estimate {estimate:e}, error bound {error_bound:e})")]
    Numerical {
        what: String,
        estimate: f64,
        error_bound: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
