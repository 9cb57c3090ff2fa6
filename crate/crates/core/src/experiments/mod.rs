//! Experiment configuration, metrics and the drivers behind each CLI
//! subcommand.

mod config;
mod drivers;
mod metrics;
mod output;
mod pipeline;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use drivers::{
    run_ablation, run_attack, run_cell, run_q1_style, run_q2_style, run_q3_style, AblationReport,
    AblationVariant, AttackCell, AttackReport, Curve, Q3Report, Q3Variant,
};
pub use metrics::{compute_aas, compute_asr, rows_csv, MetricsRow, RESULTS_HEADER};
pub use output::{
    ablation_csv, convergence_csv, manifest, q3_summary_csv, rounds_csv, write_file,
    CONVERGENCE_HEADER, ROUNDS_HEADER,
};
pub use pipeline::{
    baseline_asr, fedshift_asr, load_dataset, run_stage2, train_cell, AttackKind, CellSpec,
    Stage2Result, StartPoint, TracePoint, TrainedCell,
};

use crate::attack::AttackError;
use crate::federation::FederationError;
use crate::gnn::ModelError;
use crate::graph::{GraphError, TuError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("metric: {0}")]
    Metric(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tu(#[from] TuError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Federation(#[from] FederationError),
}
