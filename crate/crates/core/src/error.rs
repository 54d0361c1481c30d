//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two fields (or a field and a subspace) live on different measure spaces.
    #[error("measure space mismatch: {0}")]
    SpaceMismatch(String),

    /// Array lengths or dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An iterative solve hit its iteration cap before meeting tolerance.
    /// For user-supplied structure maps this usually signals an axiom violation.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    NonConvergence {
        iterations: u32,
        residual: f64,
        target: f64,
    },

    /// A reported quantity contradicts a contract it is supposed to satisfy.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Malformed instance/solution file.
    #[error("parse error: {0}")]
    Parse(String),

    /// Invalid user input (CLI arguments, config grids, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
