use serde::{Deserialize, Serialize};

use super::{kmeans_cosine, AttackError, ClusterModel};
use crate::autodiff::cosine;
use crate::gnn::{argmax, GnnParams};
use crate::graph::Graph;
use crate::rng::budget;

/// Which of a client's graphs receive shifters. Indices are positions in
/// the client's local graph list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoisonPlan {
    pub target_class: usize,
    pub target_indices: Vec<usize>,
    /// Non-target graphs the local model classifies correctly.
    pub eligible: Vec<usize>,
    /// The eligible graphs farthest from the target class, farthest first.
    pub poison_indices: Vec<usize>,
}

/// K-means centroids of the local target-class embeddings. `k` is lowered
/// to the number of target graphs when fewer are available.
pub fn target_centroids(
    model: &GnnParams,
    graphs: &[&Graph],
    target: usize,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterModel, AttackError> {
    let embeddings = graphs
        .iter()
        .filter(|g| g.label() == target)
        .map(|g| model.encode(g))
        .collect::<Result<Vec<_>, _>>()?;
    if embeddings.is_empty() {
        return Err(AttackError::NoTargetGraphs(target));
    }
    let k = k.min(embeddings.len());
    kmeans_cosine(&embeddings, k, seed, max_iters)
}

pub fn build_poison_plan(
    graphs: &[&Graph],
    model: &GnnParams,
    target: usize,
    p: f64,
    centroids: &ClusterModel,
) -> Result<PoisonPlan, AttackError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AttackError::Invalid(format!("poison ratio {p} outside [0, 1]")));
    }
    let target_indices: Vec<usize> = (0..graphs.len())
        .filter(|&i| graphs[i].label() == target)
        .collect();
    if target_indices.is_empty() {
        return Err(AttackError::NoTargetGraphs(target));
    }
    let mut eligible = Vec::new();
    let mut distance = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        if g.label() == target {
            continue;
        }
        let (emb, logits) = model.forward(g)?;
        if argmax(&logits) != g.label() {
            continue;
        }
        let d = centroids
            .centroids
            .iter()
            .map(|c| 1.0 - cosine(&emb, c))
            .fold(f64::INFINITY, f64::min);
        eligible.push(i);
        distance.push(d);
    }
    if eligible.is_empty() {
        return Err(AttackError::NoEligibleGraphs);
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.sort_by(|&a, &b| distance[b].total_cmp(&distance[a]).then(a.cmp(&b)));
    let poison_indices = order
        .into_iter()
        .take(budget(p, eligible.len()))
        .map(|j| eligible[j])
        .collect();
    Ok(PoisonPlan {
        target_class: target,
        target_indices,
        eligible,
        poison_indices,
    })
}
