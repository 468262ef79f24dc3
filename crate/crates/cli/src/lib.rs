//! Library side of the `dprmdi` command-line tool.
//!
//! The binary is a thin clap wrapper; everything it does is reachable from
//! here so the acceptance tests can drive the same code paths.

pub mod commands;
pub mod config;
pub mod output;

pub use config::ExperimentConfig;
