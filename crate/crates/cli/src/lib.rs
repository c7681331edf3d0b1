//! Command-line pipeline: config file, dataset adapters, cached stages,
//! `run`/`sweep` orchestration and the standalone stage commands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod stages;
pub mod store;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
