use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::gnn::{predict, GnnParams};
use crate::graph::Graph;

/// `asr * oa^asr`, with `0^0 = 1`.
pub fn compute_aas(asr: f64, oa: f64) -> Result<f64, ExperimentError> {
    for (name, v) in [("asr", asr), ("oa", oa)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(ExperimentError::Metric(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if asr == 0.0 {
        return Ok(0.0);
    }
    Ok(asr * oa.powf(asr))
}

/// Fraction of non-target test graphs that `model` assigns to `target`
/// after `attack` has been applied to them.
pub fn compute_asr<F>(
    model: &GnnParams,
    test: &[&Graph],
    target: usize,
    mut attack: F,
) -> Result<f64, ExperimentError>
where
    F: FnMut(&Graph) -> Result<Graph, ExperimentError>,
{
    let mut total = 0usize;
    let mut hits = 0usize;
    for g in test.iter().filter(|g| g.label() != target) {
        total += 1;
        let attacked = attack(g)?;
        if predict(model, &attacked)? == target {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(ExperimentError::Metric(format!(
            "no test graphs outside target class {target}"
        )));
    }
    Ok(hits as f64 / total as f64)
}

pub const RESULTS_HEADER: &str = "dataset,N,cm,aggregator,p,f,n_tri,seed,asr,oa,aas";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub clients: usize,
    pub malicious: usize,
    pub aggregator: String,
    pub p: f64,
    pub f: f64,
    pub n_tri: f64,
    pub seed: u64,
    pub asr: f64,
    pub oa: f64,
    pub aas: f64,
}

impl MetricsRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.clients,
            self.malicious,
            self.aggregator,
            self.p,
            self.f,
            self.n_tri,
            self.seed,
            self.asr,
            self.oa,
            self.aas
        )
    }

    /// `aas` agrees with `asr` and `oa`.
    pub fn is_consistent(&self) -> bool {
        compute_aas(self.asr, self.oa).is_ok_and(|a| (a - self.aas).abs() <= 1e-12)
    }
}

pub fn rows_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}
