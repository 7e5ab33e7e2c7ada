//! Crate-wide error type.
//!
//! Most numerical routines distinguish three failure classes:
//! * `Domain` — the caller handed us something structurally invalid
//!   (zero vector, dimension mismatch, weights off the simplex, ...).
//! * `RegimeViolation` — inputs are structurally fine but outside the
//!   large-concentration regime the matrix von Mises-Fisher moment
//!   approximations require (some E(Q_ℓℓ) ≤ 0). During MCMC this is
//!   handled by assigning log-posterior −∞ rather than erroring.
//! * `Validation` / `Io` / `Parse` — dataset and configuration problems
//!   surfaced by the CLI with exit code 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("approximation regime violated: {0}")]
    RegimeViolation(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn regime(msg: impl Into<String>) -> Self {
        Error::RegimeViolation(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
