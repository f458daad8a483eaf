//! Std companion to `marl-core`: TOML run configs, metrics CSVs, binary
//! checkpoints, frame dumps and the `marl` command line.

pub mod checkpoint;
pub mod commands;
pub mod config;
mod error;
pub mod metrics;
pub mod render;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{Error, Result};
