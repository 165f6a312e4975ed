//! Experiment runner: configs, data sources, end-to-end runs, reports and
//! the benchmark suite behind the `fedcal` binary.

pub mod bench;
pub mod config;
pub mod embeddings;
pub mod error;
pub mod experiment;
pub mod report;
pub mod synthetic;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{Result, RunError};
pub use experiment::{run_experiment, run_points, run_to_dir, ResultsFile, RunOptions};
