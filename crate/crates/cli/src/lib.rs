//! Command layer over `rmv-core`: JSON configuration, artifact
//! emission and the four-stage estimation-to-hedging pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_NUMERIC};
