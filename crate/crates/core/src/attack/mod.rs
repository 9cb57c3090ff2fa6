//! Two-stage feature-perturbation attack: shifter generators, cluster-guided
//! Stage-1 training, Stage-2 perturbation finding against a frozen global
//! model, and a random-trigger baseline.

mod generator;
mod kmeans;
mod loss;
mod plan;
mod shifter;
mod stage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generator::{GeneratorKind, GeneratorParams};
pub use kmeans::{kmeans_cosine, nearest_centroid, ClusterModel};
pub use loss::{loss_ce, loss_dist, loss_homo};
pub use plan::{build_poison_plan, target_centroids, PoisonPlan};
pub use shifter::{
    aggregate_perturbations, apply_shifter, generate_shifter, random_trigger_baseline,
    reset_shifter_invocations, shifter_invocations, shifter_positions, FeatureBounds, Shifter,
};
pub use stage::{fl_tune, stage1_epoch, stage1_train, stage2_epoch, stage2_finetune, StageLosses};

use crate::autodiff::AutodiffError;
use crate::checkpoint::CheckpointError;
use crate::gnn::ModelError;
use crate::graph::GraphError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("need at least {k} embeddings for k-means, got {found}")]
    TooFewPoints { k: usize, found: usize },
    #[error("embedding {index} has zero norm")]
    ZeroNorm { index: usize },
    #[error("no local graphs of target class {0}")]
    NoTargetGraphs(usize),
    #[error("no correctly classified non-target graphs")]
    NoEligibleGraphs,
    #[error("shifter positions differ between clients")]
    MismatchedPositions,
    #[error("node {node} outside graph of {num_nodes} nodes")]
    Position { node: usize, num_nodes: usize },
    #[error("invalid attack setting: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Hyperparameters shared by both attack stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target_class: usize,
    /// Poisoned graph ratio.
    pub p: f64,
    /// Feature-dimension ratio.
    pub f: f64,
    /// Trigger node ratio.
    pub n_tri: f64,
    pub k: usize,
    pub lambda_dist: f64,
    pub lambda_homo: f64,
    pub lambda_ce: f64,
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub tune_epochs: usize,
    pub recluster_every: usize,
    pub stage2_lr: f64,
    pub stage2_epochs: usize,
    pub generator: GeneratorKind,
    pub generator_hidden: usize,
    pub kmeans_iters: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            target_class: 1,
            p: 0.1,
            f: 0.1,
            n_tri: 0.1,
            k: 3,
            lambda_dist: 1.0,
            lambda_homo: 0.1,
            lambda_ce: 0.5,
            tau: 0.5,
            lr: 0.01,
            epochs: 30,
            tune_epochs: 1,
            recluster_every: 5,
            stage2_lr: 0.01,
            stage2_epochs: 30,
            generator: GeneratorKind::Mlp,
            generator_hidden: 16,
            kmeans_iters: 100,
        }
    }
}

impl AttackConfig {
    /// Every violated constraint, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("p", self.p), ("f", self.f), ("n_tri", self.n_tri)] {
            if !(v > 0.0 && v <= 1.0) {
                out.push(format!("{name} = {v} must lie in (0, 1]"));
            }
        }
        if self.k == 0 {
            out.push("k must be at least 1".into());
        }
        for (name, v) in [
            ("lambda_dist", self.lambda_dist),
            ("lambda_homo", self.lambda_homo),
            ("lambda_ce", self.lambda_ce),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{name} = {v} must be non-negative"));
            }
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            out.push(format!("tau = {} must lie in [-1, 1]", self.tau));
        }
        for (name, v) in [("lr", self.lr), ("stage2_lr", self.stage2_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} = {v} must be positive"));
            }
        }
        if self.recluster_every == 0 {
            out.push("recluster_every must be at least 1".into());
        }
        if self.generator_hidden == 0 {
            out.push("generator_hidden must be at least 1".into());
        }
        out
    }
}
