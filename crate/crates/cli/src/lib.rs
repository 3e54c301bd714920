//! Experiment runner for the NFAD simulator: config parsing, dispatch to the
//! core library, CSV output and reproducibility manifests.

pub mod config;
pub mod error;
pub mod experiment;
pub mod params;
pub mod run;

pub use config::Document;
pub use error::CliError;
pub use experiment::{DetectorChoice, ExperimentConfig, ExperimentKind};
pub use run::{run_experiment, RunSummary};
