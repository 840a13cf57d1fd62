//! Command-line front end: TOML run configurations, CSV ingestion, and the
//! `fit`, `forecast`, `select` and `synth` commands with deterministic,
//! atomically written outputs.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod synth;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
