//! Error type shared by every layer of the crate.

use thiserror::Error;

/// Errors surfaced by problem oracles, estimators, the optimizer loop, the
/// parameter planner and the diagnostics layer.
#[derive(Debug, Error)]
pub enum StormError {
    /// A caller-supplied argument is structurally invalid (empty batch, zero
    /// batch size, non-positive step size, out-of-range momentum, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A component index is outside the pool it addresses.
    #[error("component index {index} out of range for pool of size {pool}")]
    IndexOutOfRange { index: usize, pool: usize },

    /// Vector/matrix dimensions do not match the problem's declared shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An oracle was evaluated outside its domain (e.g. a log of a
    /// non-positive inner coordinate). Carries the offending coordinate.
    #[error("domain violation in component {component}: coordinate {coordinate} = {value} (must be > 0)")]
    DomainViolation {
        component: usize,
        coordinate: usize,
        value: f64,
    },

    /// A non-finite value appeared during an optimization run.
    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: u64, message: String },

    /// Problem constants are unusable for planning (non-positive entries,
    /// non-finite values, ...).
    #[error("infeasible constants: {0}")]
    InfeasibleConstants(String),

    /// The requested accuracy is outside the admissible window for the given
    /// constants, or resolves to momentum weights outside (0, 1].
    #[error("infeasible epsilon {eps}: {message}")]
    InfeasibleEpsilon { eps: f64, message: String },

    /// A problem could not be built from its inputs (non-stochastic rows,
    /// degenerate data, ...).
    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    /// Underlying I/O error (CSV loading and similar).
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, StormError>;
