//! Command-line front end: batch runs from JSON configs with flag
//! overrides, model validation, and the live session server.

pub mod cli;
pub mod config;
pub mod server;

pub use cli::{run, Cli, Command, RunArgs, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
pub use config::{parse_config, ConfigError, Override};
