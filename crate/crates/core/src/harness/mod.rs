//! Experiment orchestration: configuration, metrics, data generation,
//! training, evaluation and sweeps.

pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod sweep;

pub use config::{DataConfig, EvalConfig, ExperimentConfig};
pub use metrics::{compute_metrics, summarize, MetricsReport, Summary};
pub use pipeline::{
    evaluate, gen_data, load_checkpoint, load_trace, make_proposer, save_checkpoint, train_models, write_loss_csv,
    write_metrics_csv, EvalOutcome, Experiment, LossRow, Models, ProposerKind, Split,
};
pub use sweep::{run_sweep, seed_means, write_sweep_csv, SweepAxis, SweepRow, SweepSpec};
