use super::AttackError;
use crate::autodiff::{cosine, Matrix, Tape, Var};
use crate::graph::Graph;

/// Cosine distance `1 - cos(v, c)`.
pub fn loss_dist(v: &[f64], c: &[f64]) -> Result<f64, AttackError> {
    for (index, x) in [v, c].into_iter().enumerate() {
        if x.iter().all(|&a| a == 0.0) {
            return Err(AttackError::ZeroNorm { index });
        }
    }
    Ok(1.0 - cosine(v, c))
}

/// Mean hinge `max(0, tau - cos(x_u, x_v))` over edges. Zero for an
/// edgeless graph.
pub fn loss_homo(graph: &Graph, tau: f64) -> f64 {
    if graph.num_edges() == 0 {
        log::debug!("homophily loss on an edgeless graph is 0");
        return 0.0;
    }
    let x = graph.features();
    let total: f64 = graph
        .edges()
        .iter()
        .map(|e| (tau - cosine(x.row(e.u), x.row(e.v))).max(0.0))
        .sum();
    total / graph.num_edges() as f64
}

/// Softmax cross-entropy of `logits` against `label`.
pub fn loss_ce(logits: &[f64], label: usize) -> Result<f64, AttackError> {
    if label >= logits.len() {
        return Err(AttackError::Invalid(format!(
            "label {label} outside {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

pub(crate) fn dist_on_tape(tape: &mut Tape, v: Var, c: &[f64]) -> Result<Var, AttackError> {
    let c = tape.constant(Matrix::row_vector(c.to_vec()));
    let cos = tape.cosine_rows(v, c)?;
    let one = tape.constant(Matrix::scalar(1.0));
    Ok(tape.sub(one, cos)?)
}

pub(crate) fn homo_on_tape(
    tape: &mut Tape,
    x: Var,
    graph: &Graph,
    tau: f64,
) -> Result<Var, AttackError> {
    let m = graph.num_edges();
    if m == 0 {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let us: Vec<usize> = graph.edges().iter().map(|e| e.u).collect();
    let vs: Vec<usize> = graph.edges().iter().map(|e| e.v).collect();
    let xu = tape.row_gather(x, &us)?;
    let xv = tape.row_gather(x, &vs)?;
    let sim = tape.cosine_rows(xu, xv)?;
    let tau = tape.constant(Matrix::filled(m, 1, tau));
    let gap = tape.sub(tau, sim)?;
    let hinge = tape.relu(gap);
    Ok(tape.mean(hinge)?)
}
