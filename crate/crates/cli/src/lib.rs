//! Reproducible experiment runner around `symrm-core`.
//!
//! A run is described by one [`config::ExperimentConfig`]; [`pipelines::run`]
//! executes it and writes CSV tables, JSON-lines records and a manifest.

pub mod config;
pub mod error;
pub mod output;
pub mod pipelines;
pub mod validate;

pub use config::{ExperimentConfig, Pipeline};
pub use error::HarnessError;
pub use pipelines::run;
