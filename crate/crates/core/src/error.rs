use thiserror::Error;

use crate::estimate::FitResult;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned linear system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The estimator ran out of iterations. The best iterate and its
    /// certificate are attached.
    #[error("fit did not converge after {iterations} iterations")]
    FitNotConverged { iterations: usize, best: Box<FitResult> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
