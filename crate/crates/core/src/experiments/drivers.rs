use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{
    baseline_asr, run_stage2, train_cell, AttackKind, CellSpec, StartPoint, TracePoint,
};
use super::{ExperimentConfig, ExperimentError, MetricsRow};
use crate::federation::{IntegrityReport, RoundRecord};
use crate::graph::Dataset;

/// One attacked run's result.
#[derive(Clone, Debug)]
pub struct AttackCell {
    pub row: MetricsRow,
    pub records: Vec<RoundRecord>,
    pub trace: Vec<TracePoint>,
    pub integrity: IntegrityReport,
    pub shifter_calls: u64,
}

/// Rows of paired FedShift and baseline runs.
#[derive(Clone, Debug, Default)]
pub struct AttackReport {
    pub fedshift: Vec<AttackCell>,
    pub baseline: Vec<AttackCell>,
    /// Unattacked runs with the same seeds (OA reference).
    pub clean: Vec<AttackCell>,
}

impl AttackReport {
    pub fn integrity(&self) -> IntegrityReport {
        let mut out = IntegrityReport::default();
        for c in self.fedshift.iter().chain(&self.baseline).chain(&self.clean) {
            out.merge(c.integrity.clone());
        }
        out
    }

    pub fn fedshift_rows(&self) -> Vec<MetricsRow> {
        self.fedshift.iter().map(|c| c.row.clone()).collect()
    }

    pub fn baseline_rows(&self) -> Vec<MetricsRow> {
        self.baseline.iter().map(|c| c.row.clone()).collect()
    }

    pub fn clean_rows(&self) -> Vec<MetricsRow> {
        self.clean.iter().map(|c| c.row.clone()).collect()
    }
}

/// Trains and attacks one cell.
pub fn run_cell(
    config: &ExperimentConfig,
    dataset: &Dataset,
    spec: CellSpec,
) -> Result<AttackCell, ExperimentError> {
    let cell = train_cell(config, dataset, spec)?;
    let oa = cell.oa(dataset)?;
    let mut integrity = cell.outcome.integrity.clone();
    let (asr, trace) = match spec.attack {
        AttackKind::None => (0.0, Vec::new()),
        AttackKind::Baseline => (baseline_asr(config, &cell, dataset)?, Vec::new()),
        AttackKind::FedShift => {
            let start = if config.cold_start {
                StartPoint::Cold
            } else {
                StartPoint::Trained
            };
            let s2 = run_stage2(config, &cell, dataset, start, config.stage2_epochs)?;
            integrity.merge(s2.integrity.clone());
            (s2.final_asr(), s2.trace)
        }
    };
    if spec.attack == AttackKind::None {
        integrity.check(cell.shifter_calls == 0, || {
            format!("benign run invoked shifter code {} times", cell.shifter_calls)
        });
    }
    Ok(AttackCell {
        row: cell.row(config, dataset, asr, oa)?,
        records: cell.outcome.records,
        trace,
        integrity,
        shifter_calls: cell.shifter_calls,
    })
}

fn run_cells(
    config: &ExperimentConfig,
    dataset: &Dataset,
    specs: &[CellSpec],
) -> Result<Vec<AttackCell>, ExperimentError> {
    specs
        .par_iter()
        .map(|&s| run_cell(config, dataset, s))
        .collect()
}

fn paired(
    config: &ExperimentConfig,
    dataset: &Dataset,
    base: &[CellSpec],
    clean: bool,
) -> Result<AttackReport, ExperimentError> {
    let with = |kind: AttackKind| -> Vec<CellSpec> {
        base.iter().map(|s| CellSpec { attack: kind, ..*s }).collect()
    };
    Ok(AttackReport {
        fedshift: run_cells(config, dataset, &with(AttackKind::FedShift))?,
        baseline: run_cells(config, dataset, &with(AttackKind::Baseline))?,
        clean: if clean {
            run_cells(config, dataset, &with(AttackKind::None))?
        } else {
            Vec::new()
        },
    })
}

fn repetitions(config: &ExperimentConfig) -> impl Iterator<Item = usize> {
    0..config.repetitions
}

/// Single configuration, every repetition, with clean references.
pub fn run_attack(config: &ExperimentConfig, dataset: &Dataset) -> Result<AttackReport, ExperimentError> {
    config.validate()?;
    let specs: Vec<CellSpec> = repetitions(config)
        .map(|r| CellSpec::from_config(config, AttackKind::FedShift, r))
        .collect();
    paired(config, dataset, &specs, true)
}

/// Fixed malicious count, sweeping the total number of clients.
pub fn run_q1_style(config: &ExperimentConfig, dataset: &Dataset) -> Result<AttackReport, ExperimentError> {
    config.validate()?;
    let specs: Vec<CellSpec> = config
        .q1_clients
        .iter()
        .flat_map(|&n| {
            repetitions(config).map(move |r| CellSpec {
                clients: n,
                ..CellSpec::from_config(config, AttackKind::FedShift, r)
            })
        })
        .collect();
    paired(config, dataset, &specs, false)
}

/// Fixed budget, sweeping the server's aggregation rule.
pub fn run_q2_style(config: &ExperimentConfig, dataset: &Dataset) -> Result<AttackReport, ExperimentError> {
    config.validate()?;
    let specs: Vec<CellSpec> = config
        .q2_aggregators
        .iter()
        .flat_map(|&a| {
            repetitions(config).map(move |r| CellSpec {
                aggregator: a,
                ..CellSpec::from_config(config, AttackKind::FedShift, r)
            })
        })
        .collect();
    paired(config, dataset, &specs, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Q3Variant {
    /// Online tuning during training, Stage 2 from the tuned generator.
    Full,
    /// Stage 2 from the Stage-1 generator.
    Warm,
    /// Stage 2 from a fresh generator.
    Cold,
}

impl Q3Variant {
    pub const ALL: [Q3Variant; 3] = [Self::Full, Self::Warm, Self::Cold];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Warm => "warm",
            Self::Cold => "cold",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Curve {
    pub variant: Q3Variant,
    pub repetition: usize,
    pub initial_asr: f64,
    pub trace: Vec<TracePoint>,
    pub epochs_to_goal: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Q3Report {
    pub curves: Vec<Curve>,
    pub integrity: IntegrityReport,
}

impl Q3Report {
    pub fn curves_for(&self, variant: Q3Variant) -> impl Iterator<Item = &Curve> {
        self.curves.iter().filter(move |c| c.variant == variant)
    }

    /// Per-epoch mean over repetitions.
    pub fn mean_curve(&self, variant: Q3Variant) -> Vec<TracePoint> {
        let curves: Vec<&Curve> = self.curves_for(variant).collect();
        let Some(first) = curves.first() else {
            return Vec::new();
        };
        let m = curves.len() as f64;
        (0..first.trace.len())
            .map(|i| TracePoint {
                epoch: first.trace[i].epoch,
                asr: curves.iter().map(|c| c.trace[i].asr).sum::<f64>() / m,
                loss: curves.iter().map(|c| c.trace[i].loss).sum::<f64>() / m,
            })
            .collect()
    }
}

/// Three Stage-2 runs per repetition against one frozen global model.
pub fn run_q3_style(config: &ExperimentConfig, dataset: &Dataset) -> Result<Q3Report, ExperimentError> {
    config.validate()?;
    let per_rep: Vec<(Vec<Curve>, IntegrityReport)> = repetitions(config)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&r| {
            let spec = CellSpec {
                fl_tune: true,
                ..CellSpec::from_config(config, AttackKind::FedShift, r)
            };
            let cell = train_cell(config, dataset, spec)?;
            let mut integrity = cell.outcome.integrity.clone();
            let mut curves = Vec::new();
            for variant in Q3Variant::ALL {
                let start = match variant {
                    Q3Variant::Full => StartPoint::Trained,
                    Q3Variant::Warm => StartPoint::Stage1,
                    Q3Variant::Cold => StartPoint::Cold,
                };
                let s2 = run_stage2(config, &cell, dataset, start, config.stage2_epochs)?;
                integrity.merge(s2.integrity.clone());
                curves.push(Curve {
                    variant,
                    repetition: r,
                    initial_asr: s2.initial_asr,
                    epochs_to_goal: s2.epochs_to(config.asr_goal),
                    trace: s2.trace,
                });
            }
            Ok((curves, integrity))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut report = Q3Report::default();
    for (curves, integrity) in per_rep {
        report.curves.extend(curves);
        report.integrity.merge(integrity);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Stage1Only,
    Stage1FlTune,
    Stage1Stage2,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        Self::Stage1Only,
        Self::Stage1FlTune,
        Self::Stage1Stage2,
        Self::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stage1Only => "stage1-only",
            Self::Stage1FlTune => "stage1+fl-tune",
            Self::Stage1Stage2 => "stage1+stage2",
            Self::Full => "full",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AblationReport {
    pub rows: Vec<(AblationVariant, MetricsRow)>,
    pub integrity: IntegrityReport,
}

impl AblationReport {
    pub fn rows_for(&self, variant: AblationVariant) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(move |r| r.0 == variant).map(|r| &r.1)
    }
}

/// The four pipeline variants on shared seeds. Variants without Stage 2 are
/// scored with the generators as they left training.
pub fn run_ablation(config: &ExperimentConfig, dataset: &Dataset) -> Result<AblationReport, ExperimentError> {
    config.validate()?;
    let jobs: Vec<(usize, bool)> = repetitions(config)
        .flat_map(|r| [(r, false), (r, true)])
        .collect();
    let parts: Vec<(Vec<(AblationVariant, MetricsRow)>, IntegrityReport)> = jobs
        .par_iter()
        .map(|&(r, tune)| {
            let spec = CellSpec {
                fl_tune: tune,
                ..CellSpec::from_config(config, AttackKind::FedShift, r)
            };
            let cell = train_cell(config, dataset, spec)?;
            let oa = cell.oa(dataset)?;
            let s2 = run_stage2(config, &cell, dataset, StartPoint::Trained, config.stage2_epochs)?;
            let mut integrity = cell.outcome.integrity.clone();
            integrity.merge(s2.integrity.clone());
            let (without, with) = if tune {
                (AblationVariant::Stage1FlTune, AblationVariant::Full)
            } else {
                (AblationVariant::Stage1Only, AblationVariant::Stage1Stage2)
            };
            let rows = vec![
                (without, cell.row(config, dataset, s2.initial_asr, oa)?),
                (with, cell.row(config, dataset, s2.final_asr(), oa)?),
            ];
            Ok((rows, integrity))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut report = AblationReport::default();
    for (rows, integrity) in parts {
        report.rows.extend(rows);
        report.integrity.merge(integrity);
    }
    report
        .rows
        .sort_by_key(|(v, r)| (AblationVariant::ALL.iter().position(|x| x == v), r.seed));
    Ok(report)
}
