//! Seeded two-class synthetic corpus.
//!
//! Class 0 graphs are two dense communities joined by one or two bridge
//! edges; class 1 graphs are Erdős–Rényi with the same expected edge count.
//! Node features are Gaussian around a class-dependent mean: class 1 is
//! shifted by `mean_gap` on the first `signal_dims` dimensions.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Edge, Graph, GraphError};
use crate::autodiff::Matrix;
use crate::rng::{stream, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub graphs_per_class: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// Edge probability inside a community of a class-0 graph.
    pub intra_density: f64,
    pub mean_gap: f64,
    pub noise_std: f64,
    pub signal_dims: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 2,
            graphs_per_class: 100,
            min_nodes: 10,
            max_nodes: 20,
            feature_dim: 8,
            seed: 0,
            intra_density: 0.7,
            mean_gap: 1.0,
            noise_std: 1.0,
            signal_dims: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Invalid(m));
        if self.num_classes != 2 {
            return bad(format!(
                "synthetic corpus has exactly 2 classes, requested {}",
                self.num_classes
            ));
        }
        if self.min_nodes < 4 || self.max_nodes < self.min_nodes {
            return bad(format!(
                "node range {}..={} must satisfy 4 <= min <= max",
                self.min_nodes, self.max_nodes
            ));
        }
        if self.feature_dim < 4 {
            return bad(format!("feature dim {} < 4", self.feature_dim));
        }
        if self.graphs_per_class == 0 {
            return bad("graphs_per_class must be positive".into());
        }
        if !(self.intra_density > 0.0 && self.intra_density <= 1.0) {
            return bad(format!("intra_density {} outside (0, 1]", self.intra_density));
        }
        if !(self.noise_std >= 0.0) || !self.mean_gap.is_finite() {
            return bad("noise_std must be >= 0 and mean_gap finite".into());
        }
        if self.signal_dims == 0 || self.signal_dims > self.feature_dim {
            return bad(format!(
                "signal_dims {} outside 1..={}",
                self.signal_dims, self.feature_dim
            ));
        }
        Ok(())
    }
}

fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

fn community_graph(n: usize, spec: &SyntheticSpec, rng: &mut StreamRng) -> Vec<Edge> {
    let split = n / 2;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let same = (u < split) == (v < split);
            if same && rng.random::<f64>() < spec.intra_density {
                edges.push(Edge::new(u, v));
            }
        }
    }
    let bridges = rng.random_range(1..=2);
    for _ in 0..bridges {
        let u = rng.random_range(0..split);
        let v = rng.random_range(split..n);
        edges.push(Edge::new(u, v));
    }
    edges
}

fn random_graph(n: usize, spec: &SyntheticSpec, rng: &mut StreamRng) -> Vec<Edge> {
    let split = n / 2;
    let expected = spec.intra_density * (pairs(split) + pairs(n - split)) + 1.5;
    let p = (expected / pairs(n)).min(1.0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push(Edge::new(u, v));
            }
        }
    }
    edges
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, GraphError> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| GraphError::Invalid(e.to_string()))?;
    let mut graphs = Vec::with_capacity(spec.graphs_per_class * 2);
    for class in 0..2 {
        for index in 0..spec.graphs_per_class {
            let mut rng = stream(spec.seed, "synthetic", &[class as u64, index as u64]);
            let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
            let edges = if class == 0 {
                community_graph(n, spec, &mut rng)
            } else {
                random_graph(n, spec, &mut rng)
            };
            let mut x = Matrix::zeros(n, spec.feature_dim);
            for v in 0..n {
                for (d, value) in x.row_mut(v).iter_mut().enumerate() {
                    let mean = if class == 1 && d < spec.signal_dims {
                        spec.mean_gap
                    } else {
                        0.0
                    };
                    *value = mean + noise.sample(&mut rng);
                }
            }
            graphs.push(Graph::new(n, edges, false, x, class)?);
        }
    }
    Dataset::new("synthetic", graphs, 2)
}
