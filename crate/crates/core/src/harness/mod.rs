//! Checkpoints, configuration, environment variants, training and benchmarking.

pub mod benchmark;
pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod variants;

pub use benchmark::{run_benchmark, summarize, BenchmarkConfig, BenchmarkReport, PrimitivePlan, RunRecord, SummaryCell};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointKind, CheckpointMeta, Network};
pub use config::{load_experiment_config, parse_experiment_config, KeyValues};
pub use experiment::{
    build_agent, build_agent_from, evaluate, evaluate_policy, fuse_checkpoints, metrics_to_csv, parse_metrics_csv, run_experiment,
    train, train_with_sources, write_metrics_csv, EvalOptions, EvalResult, ExperimentConfig, Method, MetricsRow,
    TrainOutcome, WorldOverrides, METRICS_HEADER,
};
pub use variants::{variant, VARIANT_NAMES};
