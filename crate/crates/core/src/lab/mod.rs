//! Configuration, orchestration and report emission for the `lab` binary.

pub mod config;
pub mod experiment;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, write_report, Format, ReportBundle, Subcommand};
