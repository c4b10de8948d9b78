//! Scenario files, output formats and the `nar` command line.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod render;
pub mod snapshot;

pub use error::{CliError, CliResult};
