use std::cell::Cell;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AttackError, GeneratorParams};
use crate::autodiff::{Matrix, Tape, Var};
use crate::graph::{top_k_nodes, Graph};
use crate::rng::{budget, stream};

thread_local! {
    static INVOCATIONS: Cell<u64> = const { Cell::new(0) };
}

fn probe() {
    INVOCATIONS.with(|c| c.set(c.get() + 1));
}

/// Number of shifter generations/applications on this thread since the last
/// reset.
pub fn shifter_invocations() -> u64 {
    INVOCATIONS.with(Cell::get)
}

pub fn reset_shifter_invocations() {
    INVOCATIONS.with(|c| c.set(0));
}

/// A feature-only perturbation of selected nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shifter {
    pub positions: Vec<usize>,
    /// `|positions| x d`, zero outside `dim_mask`.
    pub delta: Matrix,
    pub dim_mask: Vec<bool>,
}

impl Shifter {
    pub fn masked_dims(&self) -> usize {
        self.dim_mask.iter().filter(|&&m| m).count()
    }

    fn validate(&self, graph: &Graph) -> Result<(), AttackError> {
        let n = graph.num_nodes();
        let mut seen = vec![false; n];
        for &p in &self.positions {
            if p >= n {
                return Err(AttackError::Position { node: p, num_nodes: n });
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(AttackError::Invalid(format!("position {p} repeated")));
            }
        }
        let d = graph.feature_dim();
        if self.delta.shape() != (self.positions.len(), d) || self.dim_mask.len() != d {
            return Err(AttackError::Invalid(format!(
                "shifter delta {:?} / mask {} do not fit {} positions x {d} features",
                self.delta.shape(),
                self.dim_mask.len(),
                self.positions.len()
            )));
        }
        Ok(())
    }
}

/// Per-dimension feature range observed in a set of graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FeatureBounds {
    pub fn from_graphs(graphs: &[&Graph]) -> Result<Self, AttackError> {
        let first = graphs
            .first()
            .ok_or_else(|| AttackError::Invalid("feature bounds of no graphs".into()))?;
        let d = first.feature_dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for g in graphs {
            if g.feature_dim() != d {
                return Err(AttackError::Invalid("mixed feature dimensions".into()));
            }
            let x = g.features();
            for r in 0..x.rows() {
                for (j, &v) in x.row(r).iter().enumerate() {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
        }
        if lo.iter().any(|v| v.is_infinite()) {
            return Err(AttackError::Invalid("feature bounds of nodeless graphs".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn union(parts: &[FeatureBounds]) -> Result<Self, AttackError> {
        let first = parts
            .first()
            .ok_or_else(|| AttackError::Invalid("union of no bounds".into()))?;
        let mut out = first.clone();
        for b in &parts[1..] {
            if b.lo.len() != out.lo.len() {
                return Err(AttackError::Invalid("mixed feature dimensions".into()));
            }
            for j in 0..out.lo.len() {
                out.lo[j] = out.lo[j].min(b.lo[j]);
                out.hi[j] = out.hi[j].max(b.hi[j]);
            }
        }
        Ok(out)
    }

    /// Half-width of each dimension's range, or 1 for a constant dimension.
    pub fn half_range(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| {
                let w = (h - l) / 2.0;
                if w > 0.0 {
                    w
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Clamp matrices for `graph`, widened so every original value is inside.
    fn for_graph(&self, graph: &Graph) -> (Matrix, Matrix) {
        let x = graph.features();
        let mut lo = x.clone();
        let mut hi = x.clone();
        for r in 0..x.rows() {
            for j in 0..x.cols() {
                lo.set(r, j, self.lo[j].min(x.get(r, j)));
                hi.set(r, j, self.hi[j].max(x.get(r, j)));
            }
        }
        (lo, hi)
    }
}

/// The `ceil(n_tri * n)` nodes with the highest clustering coefficients.
pub fn shifter_positions(graph: &Graph, n_tri: f64) -> Result<Vec<usize>, AttackError> {
    if graph.num_nodes() == 0 {
        return Err(AttackError::Invalid("empty graph".into()));
    }
    let k = budget(n_tri, graph.num_nodes());
    if k == 0 {
        return Err(AttackError::Invalid(format!(
            "trigger ratio {n_tri} selects no nodes"
        )));
    }
    Ok(top_k_nodes(graph, k)?)
}

/// The `ceil(f * d)` columns with the largest mean magnitude, ties to the
/// lower index. `prefer` breaks equal magnitudes before the index does.
fn select_mask(values: &Matrix, f: f64, prefer: Option<&[usize]>) -> Vec<bool> {
    let d = values.cols();
    let keep = budget(f, d).max(1);
    let mut score = vec![0.0; d];
    for r in 0..values.rows() {
        for (s, v) in score.iter_mut().zip(values.row(r)) {
            *s += v.abs();
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        score[b]
            .total_cmp(&score[a])
            .then_with(|| match prefer {
                Some(p) => p[b].cmp(&p[a]),
                None => std::cmp::Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; d];
    for &j in &order[..keep] {
        mask[j] = true;
    }
    mask
}

fn mask_matrix(mask: &[bool], rows: usize) -> Matrix {
    let row: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Matrix::new(rows, mask.len(), row.repeat(rows)).expect("sized")
}

pub fn generate_shifter(
    generator: &GeneratorParams,
    graph: &Graph,
    n_tri: f64,
    f: f64,
) -> Result<Shifter, AttackError> {
    probe();
    let positions = shifter_positions(graph, n_tri)?;
    let raw = generator.raw(graph, &positions)?;
    let dim_mask = select_mask(&raw, f, None);
    let mut delta = raw;
    for r in 0..delta.rows() {
        for (v, &m) in delta.row_mut(r).iter_mut().zip(&dim_mask) {
            if !m {
                *v = 0.0;
            }
        }
    }
    Ok(Shifter {
        positions,
        delta,
        dim_mask,
    })
}

/// Adds the perturbation to the selected rows and clamps them to `bounds`
/// (widened to contain the original values). Edges and label are kept.
pub fn apply_shifter(
    graph: &Graph,
    shifter: &Shifter,
    bounds: &FeatureBounds,
) -> Result<Graph, AttackError> {
    probe();
    shifter.validate(graph)?;
    if bounds.lo.len() != graph.feature_dim() {
        return Err(AttackError::Invalid("bounds do not match feature dim".into()));
    }
    let mut x = graph.features().clone();
    for (r, &node) in shifter.positions.iter().enumerate() {
        for j in 0..x.cols() {
            let dv = shifter.delta.get(r, j);
            if dv == 0.0 {
                continue;
            }
            let orig = x.get(node, j);
            let lo = bounds.lo[j].min(orig);
            let hi = bounds.hi[j].max(orig);
            x.set(node, j, (orig + dv).max(lo).min(hi));
        }
    }
    Ok(graph.with_features(x)?)
}

/// Generates a shifter on the tape and returns the poisoned feature matrix,
/// so gradients reach the generator through the kept dimensions.
pub(crate) fn poisoned_features_on_tape(
    tape: &mut Tape,
    generator: &GeneratorParams,
    bound: &super::generator::BoundGenerator,
    graph: &Graph,
    positions: &[usize],
    f: f64,
    bounds: &FeatureBounds,
) -> Result<Var, AttackError> {
    probe();
    let raw = generator.raw_on_tape(tape, bound, graph, positions)?;
    let mask = select_mask(tape.value(raw), f, None);
    let mask = tape.constant(mask_matrix(&mask, positions.len()));
    let delta = tape.mul(raw, mask)?;
    let spread = tape.row_scatter_add(delta, positions, graph.num_nodes())?;
    let x = tape.constant(graph.features().clone());
    let shifted = tape.add(x, spread)?;
    let (lo, hi) = bounds.for_graph(graph);
    Ok(tape.clamp(shifted, lo, hi)?)
}

/// Elementwise mean of several clients' shifters for the same graph, then
/// re-masked to the feature budget.
pub fn aggregate_perturbations(shifters: &[Shifter], f: f64) -> Result<Shifter, AttackError> {
    let first = shifters
        .first()
        .ok_or_else(|| AttackError::Invalid("no shifters to aggregate".into()))?;
    if shifters
        .iter()
        .any(|s| s.positions != first.positions || s.delta.shape() != first.delta.shape())
    {
        return Err(AttackError::MismatchedPositions);
    }
    let m = shifters.len() as f64;
    let mut mean = Matrix::zeros(first.delta.rows(), first.delta.cols());
    for s in shifters {
        for (o, v) in mean.data_mut().iter_mut().zip(s.delta.data()) {
            *o += v;
        }
    }
    for v in mean.data_mut() {
        *v /= m;
    }
    let mut votes = vec![0usize; first.dim_mask.len()];
    for s in shifters {
        for (v, &k) in votes.iter_mut().zip(&s.dim_mask) {
            *v += usize::from(k);
        }
    }
    let dim_mask = select_mask(&mean, f, Some(&votes));
    for r in 0..mean.rows() {
        for (v, &k) in mean.row_mut(r).iter_mut().zip(&dim_mask) {
            if !k {
                *v = 0.0;
            }
        }
    }
    Ok(Shifter {
        positions: first.positions.clone(),
        delta: mean,
        dim_mask,
    })
}

/// Random trigger: random positions and dimensions, with trigger values
/// drawn uniformly from `bounds`. Values and dimensions depend only on
/// `seed`, so every graph receives the same pattern.
pub fn random_trigger_baseline(
    graph: &Graph,
    n_tri: f64,
    f: f64,
    bounds: &FeatureBounds,
    seed: u64,
) -> Result<Shifter, AttackError> {
    probe();
    let n = graph.num_nodes();
    let d = graph.feature_dim();
    if bounds.lo.len() != d {
        return Err(AttackError::Invalid("bounds do not match feature dim".into()));
    }
    let k = budget(n_tri, n);
    if k == 0 {
        return Err(AttackError::Invalid(format!(
            "trigger ratio {n_tri} selects no nodes of {n}"
        )));
    }
    let positions = sample(&mut stream(seed, "trigger-positions", &[n as u64]), n, k).into_vec();
    let kept = sample(&mut stream(seed, "trigger-dims", &[]), d, budget(f, d).max(1)).into_vec();
    let mut dim_mask = vec![false; d];
    for j in kept {
        dim_mask[j] = true;
    }
    let mut values = stream(seed, "trigger-values", &[]);
    let mut delta = Matrix::zeros(k, d);
    for (r, &node) in positions.iter().enumerate() {
        for j in 0..d {
            let v = if bounds.hi[j] > bounds.lo[j] {
                values.random_range(bounds.lo[j]..=bounds.hi[j])
            } else {
                bounds.lo[j]
            };
            if dim_mask[j] {
                delta.set(r, j, v - graph.features().get(node, j));
            }
        }
    }
    Ok(Shifter {
        positions,
        delta,
        dim_mask,
    })
}
