//! Experiment runner for `dircause`: simulation, inference runs and oracle queries.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{run, Cli, Command};
pub use error::{CliError, CliResult};
