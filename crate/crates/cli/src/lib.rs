//! Command layer: configuration, subcommands and run artifacts.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{Mode, Overrides, RunConfig};
pub use error::{CliError, Result};
