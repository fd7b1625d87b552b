//! Experiment orchestration behind the `pricing-lab` binary: configuration,
//! commands and their output bundles.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{Outcome, Overrides};
pub use config::{ExperimentConfig, LoadedConfig};
pub use error::CliError;
