//! Metrics, datasets, experiment configuration and orchestration.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod io;
pub mod metrics;

pub use config::{DataConfig, ExperimentConfig, Method, ModelConfig, OutputConfig, OutputFormat, SolverConfig};
pub use dataset::{generate_onmodel, generate_synthetic, obtain_dataset, synthetic_target, Dataset, Manifest};
pub use experiment::{
    cakf_config, draw_samples, ensemble_seed, median, result_rows, run_experiment, run_method, splits, step_metrics,
    summarize, SummaryRow,
    write_artifacts, write_results, ExperimentOutput, ResultRow, RunResult,
};
pub use metrics::{avg_nld, mse};
