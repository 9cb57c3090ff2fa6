//! Graph data model, TU-format ingestion, synthetic corpora, splitting and
//! node-level structural analytics.

mod clustering;
mod split;
mod synthetic;
pub mod tu;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Matrix;

pub use clustering::{clustering_coefficient, clustering_coefficients, top_k_nodes, CoefficientKind};
pub use split::{partition_clients, split_train_test, Partition};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use tu::{load_tu_dataset, parse_tu, write_tu_dataset, TuError, TuSources};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({u}, {v}) references a node outside 0..{num_nodes}")]
    EndpointOutOfRange { u: usize, v: usize, num_nodes: usize },
    #[error("edge ({u}, {v}) has non-positive or non-finite weight {weight}")]
    BadWeight { u: usize, v: usize, weight: f64 },
    #[error("feature matrix has {rows} rows for {num_nodes} nodes")]
    FeatureRows { rows: usize, num_nodes: usize },
    #[error("node {node} out of range (graph has {num_nodes} nodes)")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("k = {k} outside 1..={num_nodes}")]
    BadK { k: usize, num_nodes: usize },
    #[error("graph {index} has label {label} but the dataset has {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("graph {index} has feature dimension {found}, expected {expected}")]
    FeatureDim {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("a dataset needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("invalid request: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v, weight: 1.0 }
    }

    pub fn weighted(u: usize, v: usize, weight: f64) -> Self {
        Self { u, v, weight }
    }
}

/// A single attributed graph with a class label.
///
/// Edges are normalised on construction: self-loops are dropped, undirected
/// edges are stored once with `u < v`, duplicates keep their first weight,
/// and the list is sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    directed: bool,
    features: Matrix,
    label: usize,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edges: Vec<Edge>,
        directed: bool,
        features: Matrix,
        label: usize,
    ) -> Result<Self, GraphError> {
        if features.rows() != num_nodes {
            return Err(GraphError::FeatureRows {
                rows: features.rows(),
                num_nodes,
            });
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in edges {
            if e.u >= num_nodes || e.v >= num_nodes {
                return Err(GraphError::EndpointOutOfRange {
                    u: e.u,
                    v: e.v,
                    num_nodes,
                });
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(GraphError::BadWeight {
                    u: e.u,
                    v: e.v,
                    weight: e.weight,
                });
            }
            if e.u == e.v {
                continue;
            }
            let key = if directed || e.u < e.v {
                (e.u, e.v)
            } else {
                (e.v, e.u)
            };
            merged.entry(key).or_insert(e.weight);
        }
        let edges = merged
            .into_iter()
            .map(|((u, v), weight)| Edge { u, v, weight })
            .collect();
        Ok(Self {
            num_nodes,
            edges,
            directed,
            features,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn is_weighted(&self) -> bool {
        self.edges.iter().any(|e| e.weight != 1.0)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Same structure and label with a replacement feature matrix.
    pub fn with_features(&self, features: Matrix) -> Result<Self, GraphError> {
        if features.rows() != self.num_nodes {
            return Err(GraphError::FeatureRows {
                rows: features.rows(),
                num_nodes: self.num_nodes,
            });
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    pub fn with_label(&self, label: usize) -> Self {
        Self {
            label,
            ..self.clone()
        }
    }

    /// Neighbour sets ignoring direction, sorted ascending.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Node pairs joined by an edge in either direction, for message passing.
    /// Each undirected edge yields both `(u, v)` and `(v, u)`; a directed
    /// arc `u -> v` yields `(u, v)` only.
    pub fn message_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::with_capacity(self.edges.len() * 2);
        for e in &self.edges {
            pairs.push((e.u, e.v));
            if !self.directed {
                pairs.push((e.v, e.u));
            }
        }
        pairs
    }
}

/// A labelled collection of graphs sharing one feature dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<Graph>,
        num_classes: usize,
    ) -> Result<Self, GraphError> {
        if num_classes < 2 {
            return Err(GraphError::TooFewClasses(num_classes));
        }
        let feature_dim = graphs.first().map_or(0, Graph::feature_dim);
        for (index, g) in graphs.iter().enumerate() {
            if g.label >= num_classes {
                return Err(GraphError::LabelOutOfRange {
                    index,
                    label: g.label,
                    num_classes,
                });
            }
            if g.feature_dim() != feature_dim {
                return Err(GraphError::FeatureDim {
                    index,
                    found: g.feature_dim(),
                    expected: feature_dim,
                });
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, index: usize) -> &Graph {
        &self.graphs[index]
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label] += 1;
        }
        counts
    }

    /// Table-style summary statistics.
    pub fn summary(&self) -> DatasetSummary {
        let n = self.graphs.len().max(1) as f64;
        DatasetSummary {
            name: self.name.clone(),
            graphs: self.graphs.len(),
            classes: self.num_classes,
            class_counts: self.class_counts(),
            avg_nodes: self.graphs.iter().map(|g| g.num_nodes as f64).sum::<f64>() / n,
            avg_edges: self.graphs.iter().map(|g| g.edges.len() as f64).sum::<f64>() / n,
            feature_dim: self.feature_dim,
        }
    }

    /// JSON cache form, read back by [`Dataset::from_json`].
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    /// Decodes a cached dataset, re-running every constructor check.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let raw: Dataset =
            serde_json::from_str(text).map_err(|e| GraphError::Invalid(format!("cache: {e}")))?;
        let graphs = raw
            .graphs
            .into_iter()
            .map(|g| {
                let (rows, cols) = g.features.shape();
                let x = Matrix::new(rows, cols, g.features.into_data())
                    .map_err(|e| GraphError::Invalid(format!("cache: {e}")))?;
                Graph::new(g.num_nodes, g.edges, g.directed, x, g.label)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ds = Dataset::new(raw.name, graphs, raw.num_classes)?;
        if !ds.graphs.is_empty() && ds.feature_dim != raw.feature_dim {
            return Err(GraphError::Invalid(format!(
                "cache: feature_dim {} but graphs have {}",
                raw.feature_dim, ds.feature_dim
            )));
        }
        Ok(ds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub graphs: usize,
    pub classes: usize,
    pub class_counts: Vec<usize>,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub feature_dim: usize,
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ratio: Vec<String> = self.class_counts.iter().map(ToString::to_string).collect();
        write!(
            f,
            "dataset={} graphs={} classes={} class_ratio={} avg_nodes={:.1} avg_edges={:.1} feature_dim={}",
            self.name,
            self.graphs,
            self.classes,
            ratio.join("/"),
            self.avg_nodes,
            self.avg_edges,
            self.feature_dim
        )
    }
}
