//! Experiment runner: the 2D demo, training runs and seed sweeps for the
//! portfolio and dispatch tasks, and the invariant and oracle reports.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{ExperimentConfig, Task};
pub use error::{CliError, Result};
