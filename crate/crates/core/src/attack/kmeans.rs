use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::autodiff::cosine;
use crate::gnn::Embedding;
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Embedding>,
    /// Sum of assigned cosine distances after each assignment step.
    pub objective: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn nearest_cosine(point: &[f64], centroids: &[Embedding]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = 1.0 - cosine(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// K-means under cosine distance with k-means++ seeding and arithmetic-mean
/// centroid updates. Stops at an assignment fixpoint or after `max_iters`.
pub fn kmeans_cosine(
    embeddings: &[Embedding],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterModel, AttackError> {
    if k == 0 || embeddings.len() < k {
        return Err(AttackError::TooFewPoints {
            k,
            found: embeddings.len(),
        });
    }
    if let Some(index) = embeddings
        .iter()
        .position(|e| e.iter().all(|&v| v == 0.0))
    {
        return Err(AttackError::ZeroNorm { index });
    }

    let mut rng = stream(seed, "kmeans", &[]);
    let first = rng.random_range(0..embeddings.len());
    let mut centroids = vec![embeddings[first].clone()];
    let mut chosen = vec![first];
    while centroids.len() < k {
        let weights: Vec<f64> = embeddings
            .iter()
            .map(|e| nearest_cosine(e, &centroids).1.max(0.0).powi(2))
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // every point coincides with a centroid; take the first unused one
            (0..embeddings.len())
                .find(|i| !chosen.contains(i))
                .expect("len >= k")
        };
        chosen.push(pick);
        centroids.push(embeddings[pick].clone());
    }

    let dim = embeddings[0].len();
    let mut assignment: Vec<usize> = vec![usize::MAX; embeddings.len()];
    let mut objective = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut total = 0.0;
        for (i, e) in embeddings.iter().enumerate() {
            let (j, d) = nearest_cosine(e, &centroids);
            total += d;
            if assignment[i] != j {
                assignment[i] = j;
                changed = true;
            }
        }
        objective.push(total);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (e, &j) in embeddings.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(e) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    Ok(ClusterModel {
        centroids,
        objective,
    })
}

/// Centroid closest in Euclidean distance; ties go to the lower index.
pub fn nearest_centroid<'a>(point: &[f64], model: &'a ClusterModel) -> &'a Embedding {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in model.centroids.iter().enumerate() {
        let d: f64 = point.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    &model.centroids[best]
}
