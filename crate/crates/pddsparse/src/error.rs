//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A discretization or solver configuration violates its invariants.
    #[error("configuration: {0}")]
    Config(String),

    /// A geometric query was made with inconsistent inputs (e.g. a point
    /// that does not lie on the requested patch side).
    #[error("geometry: {0}")]
    Geometry(String),

    /// A scalar parameter is out of range.
    #[error("parameter: {0}")]
    Parameter(String),

    /// The interpolation matrix is numerically singular beyond what the
    /// ridge regularisation can repair.
    #[error("conditioning: interpolation matrix condition estimate {cond:.3e} beyond regularisation capability")]
    Conditioning { cond: f64 },

    /// A matrix is singular to working precision.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// The operation needs context that was not supplied (e.g. a row
    /// recompute without the assembly inputs).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An iteration failed to converge within its budget.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    #[error("internal: {0}")]
    Internal(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
