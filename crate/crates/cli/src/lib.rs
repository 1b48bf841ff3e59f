//! Command-line front end for `cfpo-core`: single runs, sweeps, the theory check
//! suite and run aggregation.
//!
//! Exit codes: 0 success (a collapsed run is a success), 1 failed theory check or
//! training failure, 2 invalid config or usage, 3 filesystem failure.

pub mod check;
pub mod cli;
pub mod config;
mod error;
pub mod report;
pub mod run;
pub mod sweep;

pub use error::{CliError, Result};

/// Default output root when neither a flag nor the config names one.
pub const OUT_DIR_ENV: &str = "CFPO_OUT_DIR";
