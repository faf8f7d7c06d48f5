//! Config-driven experiment runner behind the `merge-mech` binary.
//!
//! Three subcommands, each writing one CSV table:
//!
//! * `compare`: objective, revenue, and user experience per mechanism, plus
//!   the top-k upper bound.
//! * `audit`: property audits per mechanism; exits 4 when a hard-gated
//!   property has a violation.
//! * `ratio`: approximation guarantees checked against the configured instance.

pub mod commands;
pub mod config;

pub use commands::{run_audit, run_compare, run_ratio, AuditRow, CompareRow, RatioRow};
pub use config::{parse_config, MechanismSpec, RunConfig};

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_AUDIT_GATE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("guard exceeded: {0}")]
    Guard(merge_mech::Error),
    #[error("hard-gate audit failure: {0}")]
    AuditGate(String),
    #[error("{0}")]
    Runtime(merge_mech::Error),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Guard(_) => EXIT_GUARD,
            Self::AuditGate(_) => EXIT_AUDIT_GATE,
            Self::Runtime(_) | Self::Io(_) => EXIT_RUNTIME,
        }
    }
}

impl From<merge_mech::Error> for CliError {
    fn from(e: merge_mech::Error) -> Self {
        match e {
            merge_mech::Error::EnumerationGuard { .. } | merge_mech::Error::RecursionBudget { .. } => Self::Guard(e),
            e => Self::Runtime(e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Serializes rows to CSV bytes with a header row.
pub fn to_csv<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
