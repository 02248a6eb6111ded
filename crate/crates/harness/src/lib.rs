//! Experiment runner for `seqopt_core` agents.
//!
//! An [`ExperimentConfig`] (JSON) names an environment, model, agent and seed
//! list. [`run_experiment`] trains one agent per seed in parallel and writes a
//! learning-curve CSV plus a summary JSON per seed; [`compare_variants`] and
//! [`sweep`] build on it. Outputs depend only on the config, never on timing.

pub mod cli;
pub mod config;
pub mod report;
pub mod runner;
pub mod selfcheck;

pub use config::{EnvironmentSpec, ExperimentConfig, SEED_ENV_VAR};
pub use report::{compare_variants, mean, standard_error, sweep, ComparisonReport, Metric, SweepParameter, SweepReport};
pub use runner::{run_experiment, run_experiment_with, RunError, RunRecord, RunSummary, CURVE_HEADER};
