//! Experiment harness: declarative run configuration, deterministic output
//! files, and a fail-soft parallel task runner with a machine-readable
//! manifest.

pub mod config;
pub mod io;
pub mod runner;

pub use config::{DynamicsKind, ExperimentConfig, Observable};
pub use runner::{
    run_experiment, validate_outputs, RunManifest, RunSummary, TaskOutcome, TaskStatus,
};
