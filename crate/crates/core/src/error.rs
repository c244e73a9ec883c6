//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration failed validation; one entry per violated invariant.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    /// Configuration file could not be parsed (unknown key, bad type, ...).
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// The inner solver could not make progress; carries diagnostics.
    #[error("solver error: {0}")]
    Solver(String),

    /// No strictly feasible starting point exists for the requested
    /// subproblem (e.g. alpha0 = 1 with zero FSO capacity).
    #[error("infeasible subproblem: {0}")]
    Infeasible(String),

    /// A quantity that must be finite came out NaN or infinite.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Recovered RF time fractions exceed the available fronthaul time,
    /// indicating a constraint violation upstream.
    #[error("time allocation infeasible: used {used:.6e}, available {available:.6e}")]
    TimeAllocation { used: f64, available: f64 },

    /// Operation is only defined for a restricted problem shape.
    #[error("unsupported: {0}")]
    Unsupported(String),
}
