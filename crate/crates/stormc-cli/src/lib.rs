//! Command-line harness for the compositional optimizer in `stormc-core`.
//!
//! The library side of the `stormc` binary: a strict TOML experiment schema
//! ([`config`]), plot-ready CSV metrics and IFO-binned aggregation
//! ([`metrics`]), and the five subcommand implementations ([`commands`]).
//!
//! Every failure is classified into one of three exit codes so scripts can
//! react without parsing messages: `1` configuration (schema, invalid
//! parameters, I/O), `2` numerical failure during a run, `3` verification
//! failure (a check or gradient validation did not pass).

pub mod commands;
pub mod config;
pub mod metrics;

/// Failure classes, one per nonzero exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, invalid parameters, or an I/O problem (exit 1).
    #[error("config error: {0}")]
    Config(String),
    /// A run produced non-finite values, violated a runtime bound, or hit a
    /// domain error (exit 2).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A verification check or gradient validation failed (exit 3).
    #[error("verification failure: {0}")]
    Verification(String),
}

impl CliError {
    /// Wraps any displayable error as a configuration failure.
    pub fn config(err: impl std::fmt::Display) -> Self {
        Self::Config(err.to_string())
    }

    /// Wraps any displayable error as a numerical failure.
    pub fn numerical(err: impl std::fmt::Display) -> Self {
        Self::Numerical(err.to_string())
    }

    /// The process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Numerical(_) => 2,
            Self::Verification(_) => 3,
        }
    }
}

/// Result alias used throughout the harness.
pub type CliResult<T> = Result<T, CliError>;
