//! Command-line harness around `ddrl-core`: run configs, on-disk artifacts and
//! the `train`, `eval`, `compare`, `terrain`, `describe-obs` and `replay` commands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod files;

pub use cli::{run, Cli};
pub use config::RunConfig;
