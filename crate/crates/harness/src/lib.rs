//! Experiment runner for the `spgd` crate: JSON configs, per-seed runs with
//! metrics and trajectory logs, parameter sweeps, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod csv_log;
pub mod error;
pub mod experiment;
pub mod image;
pub mod templates;

pub use error::{HarnessError, Result};
