//! Aggregation rules over flattened parameter vectors. Updates are always
//! given in client-id order.

use serde::{Deserialize, Serialize};

use super::FederationError;
use crate::autodiff::cosine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    FedAvg,
    Krum,
    Bulyan,
    FoolsGold,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] = [Self::FedAvg, Self::Krum, Self::Bulyan, Self::FoolsGold];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FedAvg => "fedavg",
            Self::Krum => "krum",
            Self::Bulyan => "bulyan",
            Self::FoolsGold => "foolsgold",
        }
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown aggregator {s:?} (fedavg|krum|bulyan|foolsgold)"))
    }
}

fn check_shapes(updates: &[Vec<f64>]) -> Result<usize, FederationError> {
    let first = updates
        .first()
        .ok_or_else(|| FederationError::Aggregation("no updates".into()))?;
    if let Some(i) = updates.iter().position(|u| u.len() != first.len()) {
        return Err(FederationError::Aggregation(format!(
            "update {i} has {} parameters, expected {}",
            updates[i].len(),
            first.len()
        )));
    }
    Ok(first.len())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Elementwise mean, or the weighted mean when `weights` is given.
pub fn fedavg(updates: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Vec<f64>, FederationError> {
    let len = check_shapes(updates)?;
    let uniform = vec![1.0; updates.len()];
    let w = weights.unwrap_or(&uniform);
    if w.len() != updates.len() || w.iter().any(|v| !(*v >= 0.0)) {
        return Err(FederationError::Aggregation(
            "one non-negative weight per update required".into(),
        ));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(FederationError::Aggregation("weights sum to zero".into()));
    }
    let mut out = vec![0.0; len];
    for (u, &wi) in updates.iter().zip(w) {
        for (o, v) in out.iter_mut().zip(u) {
            *o += wi * v;
        }
    }
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// Krum scores: sum of squared distances to the `neighbors` closest others.
fn krum_scores(updates: &[&Vec<f64>], neighbors: usize) -> Vec<f64> {
    let n = updates.len();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| squared_distance(updates[i], updates[j]))
                .collect();
            d.sort_by(f64::total_cmp);
            d.iter().take(neighbors).sum()
        })
        .collect()
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the Krum-selected update.
pub fn krum(updates: &[Vec<f64>], f_byz: usize) -> Result<usize, FederationError> {
    check_shapes(updates)?;
    let n = updates.len();
    if n < f_byz + 3 {
        return Err(FederationError::Aggregation(format!(
            "krum needs at least {} updates for f = {f_byz}, got {n}",
            f_byz + 3
        )));
    }
    let refs: Vec<&Vec<f64>> = updates.iter().collect();
    Ok(argmin(&krum_scores(&refs, n - f_byz - 2)))
}

/// Bulyan: iterated Krum selection of `n - 2f` updates, then a per-coordinate
/// mean of the `n - 4f` selected values nearest the median. Returns the
/// selected indices and the aggregate.
pub fn bulyan(
    updates: &[Vec<f64>],
    f_byz: usize,
) -> Result<(Vec<usize>, Vec<f64>), FederationError> {
    let len = check_shapes(updates)?;
    let n = updates.len();
    if n < 4 * f_byz + 3 {
        return Err(FederationError::Aggregation(format!(
            "bulyan needs at least {} updates for f = {f_byz}, got {n}",
            4 * f_byz + 3
        )));
    }
    let theta = n - 2 * f_byz;
    let beta = theta - 2 * f_byz;
    let mut pool: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(theta);
    while selected.len() < theta {
        let refs: Vec<&Vec<f64>> = pool.iter().map(|&i| &updates[i]).collect();
        // The pool shrinks below Krum's usual bound; keep at least one neighbour.
        let neighbors = pool.len().saturating_sub(f_byz + 2).max(1).min(pool.len() - 1);
        let pick = if pool.len() == 1 {
            0
        } else {
            argmin(&krum_scores(&refs, neighbors))
        };
        selected.push(pool.remove(pick));
    }
    selected.sort_unstable();

    let mut out = vec![0.0; len];
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(theta);
    for (c, o) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(selected.iter().map(|&i| (updates[i][c], i)));
        column.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let median = if theta % 2 == 1 {
            column[theta / 2].0
        } else {
            (column[theta / 2 - 1].0 + column[theta / 2].0) / 2.0
        };
        column.sort_by(|a, b| {
            (a.0 - median)
                .abs()
                .total_cmp(&(b.0 - median).abs())
                .then(a.0.total_cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        *o = column[..beta].iter().map(|v| v.0).sum::<f64>() / beta as f64;
    }
    Ok((selected, out))
}

/// FoolsGold client weights from accumulated update histories.
pub fn foolsgold_weights(histories: &[Vec<f64>]) -> Result<Vec<f64>, FederationError> {
    check_shapes(histories)?;
    let n = histories.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut cs = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cs[i][j] = cosine(&histories[i], &histories[j]);
            }
        }
    }
    let max_of = |cs: &Vec<Vec<f64>>, i: usize| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| cs[i][j])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let v: Vec<f64> = (0..n).map(|i| max_of(&cs, i)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && v[j] > v[i] && v[j] > 0.0 {
                cs[i][j] *= v[i] / v[j];
            }
        }
    }
    let mut w: Vec<f64> = (0..n)
        .map(|i| (1.0 - max_of(&cs, i)).clamp(0.0, 1.0))
        .collect();
    let top = w.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Ok(vec![0.0; n]);
    }
    for x in &mut w {
        *x /= top;
        if *x >= 1.0 {
            *x = 0.99;
        }
        *x = if *x <= 0.0 {
            0.0
        } else {
            ((*x / (1.0 - *x)).ln() + 0.5).clamp(0.0, 1.0)
        };
    }
    Ok(w)
}

/// FoolsGold aggregate and the weights used. Falls back to the plain mean
/// when every weight is zero.
pub fn foolsgold(
    updates: &[Vec<f64>],
    histories: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>), FederationError> {
    let len = check_shapes(updates)?;
    if histories.len() != updates.len() || histories.iter().any(|h| h.len() != len) {
        return Err(FederationError::Aggregation(
            "histories must match updates in count and length".into(),
        ));
    }
    let w = foolsgold_weights(histories)?;
    if w.iter().all(|&x| x == 0.0) {
        log::warn!("foolsgold weights are all zero; using the plain mean");
        return Ok((vec![1.0; updates.len()], fedavg(updates, None)?));
    }
    Ok((w.clone(), fedavg(updates, Some(&w))?))
}
