//! Experiment harness around `q2opt-core`: configuration files, episode
//! datasets, checkpoints, metrics and the training pipeline.

pub mod checkpoint;
pub mod config;
pub mod dataset;
mod error;
pub mod generate;
pub mod metrics;
pub mod pipeline;

pub use error::{Error, Result};
