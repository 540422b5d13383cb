//! Synthetic long-tail experiments: data, shallow scorers, SGD training and sliced metrics.

pub mod config;
pub mod data;
pub mod metrics;
pub mod model;
pub mod sweep;
pub mod train;

pub use config::{ExperimentConfig, Grid};
pub use data::{generate, generate_with, DataConfig, SyntheticDataset};
pub use metrics::{evaluate, evaluate_on, SliceMetrics, SlicedMetrics};
pub use model::{Model, ModelKind, NearestMean, Scorer};
pub use sweep::{run_one, sweep, sweep_on, write_outputs, RunRecord};
pub use train::{train, EpochTrace, TrainConfig, TrainResult, Trainer, WeightQ};
