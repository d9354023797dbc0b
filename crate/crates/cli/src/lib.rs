//! Library side of the `powermap` binary: configuration, output layout and
//! the subcommands, usable from tests without spawning a process.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::Status;
pub use config::{ConfigError, Profile, RunConfig};
