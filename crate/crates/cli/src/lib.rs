//! Configuration parsing and experiment dispatch behind the `coupled-smc`
//! binary.

pub mod commands;
pub mod config;

pub use commands::{execute, write_outcome, Command, Manifest, Outcome};
pub use config::{parse_config, ConfigError, RunConfig};
