//! Per-node clustering coefficients and influence ranking.

use std::collections::{HashMap, HashSet};

use super::{Graph, GraphError};

/// Which coefficient formula a graph uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefficientKind {
    Unweighted,
    Weighted,
    Directed,
}

impl CoefficientKind {
    /// Directed graphs use the directed formula (weights ignored); otherwise
    /// any non-unit weight selects the weighted formula.
    pub fn for_graph(graph: &Graph) -> Self {
        if graph.is_directed() {
            Self::Directed
        } else if graph.is_weighted() {
            Self::Weighted
        } else {
            Self::Unweighted
        }
    }
}

pub fn clustering_coefficient(graph: &Graph, node: usize) -> Result<f64, GraphError> {
    if node >= graph.num_nodes() {
        return Err(GraphError::NodeOutOfRange {
            node,
            num_nodes: graph.num_nodes(),
        });
    }
    Ok(Analyzer::new(graph).coefficient(node))
}

/// Coefficients for every node, in node order.
pub fn clustering_coefficients(graph: &Graph) -> Vec<f64> {
    let analyzer = Analyzer::new(graph);
    (0..graph.num_nodes()).map(|u| analyzer.coefficient(u)).collect()
}

/// The `k` nodes with the largest coefficients, descending; ties go to the
/// lower node index.
pub fn top_k_nodes(graph: &Graph, k: usize) -> Result<Vec<usize>, GraphError> {
    if k == 0 || k > graph.num_nodes() {
        return Err(GraphError::BadK {
            k,
            num_nodes: graph.num_nodes(),
        });
    }
    let coeffs = clustering_coefficients(graph);
    let mut order: Vec<usize> = (0..graph.num_nodes()).collect();
    order.sort_by(|&a, &b| coeffs[b].total_cmp(&coeffs[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

struct Analyzer<'g> {
    kind: CoefficientKind,
    /// Neighbours ignoring direction.
    neighbors: Vec<Vec<usize>>,
    /// Normalised weights keyed by `(min, max)` (weighted) or arcs (directed).
    weights: HashMap<(usize, usize), f64>,
    arcs: HashSet<(usize, usize)>,
    graph: &'g Graph,
}

impl<'g> Analyzer<'g> {
    fn new(graph: &'g Graph) -> Self {
        let kind = CoefficientKind::for_graph(graph);
        let neighbors = graph.undirected_neighbors();
        let mut weights = HashMap::new();
        let mut arcs = HashSet::new();
        match kind {
            CoefficientKind::Weighted => {
                let max = graph
                    .edges()
                    .iter()
                    .map(|e| e.weight)
                    .fold(0.0_f64, f64::max);
                for e in graph.edges() {
                    weights.insert((e.u.min(e.v), e.u.max(e.v)), e.weight / max);
                }
            }
            CoefficientKind::Directed => {
                arcs.extend(graph.edges().iter().map(|e| (e.u, e.v)));
            }
            CoefficientKind::Unweighted => {}
        }
        Self {
            kind,
            neighbors,
            weights,
            arcs,
            graph,
        }
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    fn arc(&self, a: usize, b: usize) -> f64 {
        if self.arcs.contains(&(a, b)) {
            1.0
        } else {
            0.0
        }
    }

    fn coefficient(&self, u: usize) -> f64 {
        match self.kind {
            CoefficientKind::Unweighted => self.unweighted(u),
            CoefficientKind::Weighted => self.weighted(u),
            CoefficientKind::Directed => self.directed(u),
        }
    }

    fn unweighted(&self, u: usize) -> f64 {
        let nbrs = &self.neighbors[u];
        let d = nbrs.len();
        if d < 2 {
            return 0.0;
        }
        let mut triangles = 0usize;
        for (i, &v) in nbrs.iter().enumerate() {
            for &w in &nbrs[i + 1..] {
                if self.linked(v, w) {
                    triangles += 1;
                }
            }
        }
        2.0 * triangles as f64 / (d * (d - 1)) as f64
    }

    fn weighted(&self, u: usize) -> f64 {
        let nbrs = &self.neighbors[u];
        let d = nbrs.len();
        if d < 2 {
            return 0.0;
        }
        let w = |a: usize, b: usize| self.weights[&(a.min(b), a.max(b))];
        // Sum over ordered neighbour pairs = twice the unordered sum.
        let mut total = 0.0;
        for (i, &v) in nbrs.iter().enumerate() {
            for &x in &nbrs[i + 1..] {
                if self.linked(v, x) {
                    total += 2.0 * (w(u, v) * w(u, x) * w(v, x)).cbrt();
                }
            }
        }
        total / (d * (d - 1)) as f64
    }

    fn directed(&self, u: usize) -> f64 {
        let n = self.graph.num_nodes();
        let (mut d_in, mut d_out, mut d_recip) = (0usize, 0usize, 0usize);
        for v in 0..n {
            let (out, inc) = (self.arcs.contains(&(u, v)), self.arcs.contains(&(v, u)));
            d_out += usize::from(out);
            d_in += usize::from(inc);
            d_recip += usize::from(out && inc);
        }
        let d_tot = d_in + d_out;
        if d_tot < 2 {
            return 0.0;
        }
        let denom = (d_tot * (d_tot - 1)) as f64 - 2.0 * d_recip as f64;
        if denom <= 0.0 {
            return 0.0;
        }
        // Each unordered neighbour pair contributes the product of the
        // symmetrised adjacency around the triad; half of that sum counts
        // directed triangles through `u`.
        let nbrs = &self.neighbors[u];
        let mut closed = 0.0;
        for (i, &v) in nbrs.iter().enumerate() {
            for &w in &nbrs[i + 1..] {
                let a = self.arc(u, v) + self.arc(v, u);
                let b = self.arc(v, w) + self.arc(w, v);
                let c = self.arc(w, u) + self.arc(u, w);
                closed += a * b * c;
            }
        }
        let triangles = closed / 2.0;
        2.0 * triangles / denom
    }
}
