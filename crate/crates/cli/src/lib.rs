//! Config-driven experiment runner for the dipolar Gross-Pitaevskii toolkit.

pub mod catalog;
pub mod config;
pub mod error;
pub mod fields;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::RunError;
pub use runner::{run, Summary};
