//! Twin-experiment benchmarks for the lagged particle filter and the
//! Kalman-family baselines: configuration, synthetic data, seeded runs,
//! error metrics and persistence.

pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod presets;
pub mod record;
pub mod runner;

pub use config::{ExperimentConfig, FilterSpec, ModelSpec, ReferenceKind};
pub use data::{generate_for, generate_twin_data, BuiltModel, TwinData};
pub use error::{BenchError, Result};
pub use runner::{run_experiment, Completion, ExperimentOutcome, ExperimentSummary, RunOptions};
