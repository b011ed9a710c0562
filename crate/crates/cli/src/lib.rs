//! Scenario files, sweeps, verification runs and the `dp-market` commands.

pub mod commands;
mod error;
pub mod rows;
pub mod scenario;
pub mod sweep;
pub mod verify;

pub use error::CliError;
