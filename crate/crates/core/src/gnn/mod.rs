//! GCN and GAT graph classifiers with mean-pool readout.

mod model;
mod train;

use thiserror::Error;

pub use model::{
    Architecture, BoundParams, GnnParams, GraphStructure, ModelKind, EMBED_SLOPE,
};
pub use train::{evaluate_accuracy, mean_loss, predict, train_local, TrainConfig};
pub(crate) use train::argmax;

use crate::autodiff::AutodiffError;
use crate::checkpoint::CheckpointError;

/// Graph-level embedding: the mean-pooled output of the last message-passing
/// layer, i.e. the classifier's input.
pub type Embedding = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("graph has feature dimension {found}, model expects {expected}")]
    FeatureDim { expected: usize, found: usize },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("no graphs given")]
    NoData,
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("parameter vector of length {found}, expected {expected}")]
    FlatLength { expected: usize, found: usize },
    #[error("non-finite parameters after training")]
    NonFinite,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
