//! File formats, parallel execution and command implementations for the `potgame` CLI.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;

pub use error::CliError;
