//! Experiment configuration, run directories and the batch runner behind the
//! `wavebreak` command.

pub mod config;
pub mod runner;
pub mod store;

pub use config::{Check, ExperimentConfig, Stage};
pub use runner::{diagnose_dir, run_experiment, sweep, RunManifest};
