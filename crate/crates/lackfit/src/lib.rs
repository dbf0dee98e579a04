//! Command-line companion to `lackfit-core`: experiment configs, CSV data,
//! power studies and plot exports.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod plots;
pub mod power;
pub mod run;

pub use config::ExperimentConfig;
pub use error::AppError;
