use std::fmt::Write as _;
use std::path::Path;

use super::{AblationReport, ExperimentConfig, ExperimentError, Q3Report, Q3Variant, RESULTS_HEADER};
use crate::federation::RoundRecord;

pub const CONVERGENCE_HEADER: &str = "variant,epoch,asr,loss";
pub const ROUNDS_HEADER: &str = "round,oa,aggregator,selected_or_weights,update_norms";

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// One line per round; list columns are `;`-separated.
pub fn rounds_csv(records: &[RoundRecord]) -> String {
    let mut out = format!("{ROUNDS_HEADER}\n");
    for r in records {
        let oa = r.oa.map_or(String::new(), |v| v.to_string());
        let chosen = if r.weights.is_empty() {
            join(&r.selected)
        } else {
            join(&r.weights)
        };
        let _ = writeln!(out, "{},{oa},{},{chosen},{}", r.round, r.aggregator, join(&r.update_norms));
    }
    out
}

/// Mean curve over repetitions for one variant.
pub fn convergence_csv(report: &Q3Report, variant: Q3Variant) -> String {
    let mut out = format!("{CONVERGENCE_HEADER}\n");
    for t in report.mean_curve(variant) {
        let _ = writeln!(out, "{},{},{},{}", variant.as_str(), t.epoch, t.asr, t.loss);
    }
    out
}

/// Epochs to the ASR goal per run; empty when the goal was never reached.
pub fn q3_summary_csv(report: &Q3Report) -> String {
    let mut out = String::from("variant,repetition,initial_asr,final_asr,epochs_to_goal\n");
    for c in &report.curves {
        let last = c.trace.last().map_or(c.initial_asr, |t| t.asr);
        let to = c.epochs_to_goal.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(out, "{},{},{},{last},{to}", c.variant.as_str(), c.repetition, c.initial_asr);
    }
    out
}

pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out = format!("variant,{RESULTS_HEADER}\n");
    for (v, r) in &report.rows {
        let _ = writeln!(out, "{},{}", v.as_str(), r.csv());
    }
    out
}

/// The effective config with a comment header; feeding it back through
/// `--config` reproduces the run.
pub fn manifest(command: &str, config: &ExperimentConfig) -> String {
    format!(
        "# fedshift {command} run manifest\n# crate version {}\n{}",
        env!("CARGO_PKG_VERSION"),
        config.to_toml()
    )
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}
