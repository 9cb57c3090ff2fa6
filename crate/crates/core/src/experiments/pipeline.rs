use serde::{Deserialize, Serialize};

use super::{compute_aas, compute_asr, ExperimentConfig, ExperimentError, MetricsRow};
use crate::attack::{
    aggregate_perturbations, apply_shifter, generate_shifter, random_trigger_baseline,
    reset_shifter_invocations, shifter_invocations, stage2_epoch, GeneratorParams,
};
use crate::federation::{
    run_training, AggregatorKind, AttackSetup, FederationConfig, IntegrityReport,
    TrainingOutcome,
};
use crate::gnn::{evaluate_accuracy, Architecture};
use crate::graph::{
    generate_synthetic, load_tu_dataset, partition_clients, split_train_test, Dataset, Graph,
    Partition,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    FedShift,
    Baseline,
}

/// One federated run: which clients, which defense, which attack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellSpec {
    pub clients: usize,
    pub aggregator: AggregatorKind,
    pub attack: AttackKind,
    pub fl_tune: bool,
    pub repetition: usize,
}

impl CellSpec {
    pub fn from_config(config: &ExperimentConfig, attack: AttackKind, repetition: usize) -> Self {
        Self {
            clients: config.clients,
            aggregator: config.aggregator,
            attack,
            fl_tune: config.fl_tune,
            repetition,
        }
    }
}

/// Where Stage 2 starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPoint {
    /// The generator as it left federated training.
    Trained,
    /// The generator right after Stage 1, ignoring online tuning.
    Stage1,
    /// A fresh generator.
    Cold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch: usize,
    pub asr: f64,
    pub loss: f64,
}

pub struct TrainedCell {
    pub spec: CellSpec,
    pub seed: u64,
    pub partition: Partition,
    pub outcome: TrainingOutcome,
    /// Shifter code invocations on this thread during training.
    pub shifter_calls: u64,
}

impl TrainedCell {
    pub fn test_graphs<'d>(&self, dataset: &'d Dataset) -> Vec<&'d Graph> {
        self.partition
            .test_indices
            .iter()
            .map(|&i| dataset.graph(i))
            .collect()
    }

    pub fn oa(&self, dataset: &Dataset) -> Result<f64, ExperimentError> {
        Ok(evaluate_accuracy(&self.outcome.global, &self.test_graphs(dataset))?)
    }

    pub fn row(&self, config: &ExperimentConfig, dataset: &Dataset, asr: f64, oa: f64) -> Result<MetricsRow, ExperimentError> {
        Ok(MetricsRow {
            dataset: dataset.name().to_string(),
            clients: self.spec.clients,
            malicious: config.malicious,
            aggregator: self.spec.aggregator.to_string(),
            p: config.p,
            f: config.f,
            n_tri: config.n_tri,
            seed: self.seed,
            asr,
            oa,
            aas: compute_aas(asr, oa)?,
        })
    }
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    if config.dataset == "synthetic" {
        return Ok(generate_synthetic(&config.synthetic_spec())?);
    }
    let path = std::path::Path::new(&config.dataset);
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        return Ok(Dataset::from_json(&text)?);
    }
    Ok(load_tu_dataset(path)?)
}

/// Trains one cell. Each repetition gets its own split, partition and
/// model initialisation.
pub fn train_cell(
    config: &ExperimentConfig,
    dataset: &Dataset,
    spec: CellSpec,
) -> Result<TrainedCell, ExperimentError> {
    let seed = config.repetition_seed(spec.repetition);
    let (train, test) = split_train_test(dataset.len(), config.train_ratio, seed)?;
    let partition = partition_clients(&train, &test, spec.clients, seed)?;
    let fed = FederationConfig {
        arch: Architecture::new(
            config.model,
            dataset.feature_dim(),
            config.hidden.clone(),
            dataset.num_classes(),
        ),
        rounds: config.rounds,
        malicious: config.malicious,
        aggregator: spec.aggregator,
        weighted_fedavg: config.weighted_fedavg,
        local: config.local_training(),
        seed,
    };
    let attack = match spec.attack {
        AttackKind::None => AttackSetup::None,
        AttackKind::FedShift => AttackSetup::FedShift {
            config: config.attack(),
            fl_tune: spec.fl_tune,
            pretrain: config.pretraining(),
        },
        AttackKind::Baseline => AttackSetup::Baseline {
            config: config.attack(),
        },
    };
    reset_shifter_invocations();
    let outcome = run_training(&fed, dataset, &partition, &attack)?;
    Ok(TrainedCell {
        spec,
        seed,
        partition,
        outcome,
        shifter_calls: shifter_invocations(),
    })
}

/// ASR of the aggregated shifters of `generators` against the final model.
pub fn fedshift_asr(
    config: &ExperimentConfig,
    cell: &TrainedCell,
    generators: &[GeneratorParams],
    dataset: &Dataset,
    integrity: &mut IntegrityReport,
) -> Result<f64, ExperimentError> {
    let bounds = cell
        .outcome
        .attack_bounds
        .as_ref()
        .ok_or_else(|| ExperimentError::Metric("no malicious clients".into()))?;
    let test = cell.test_graphs(dataset);
    compute_asr(&cell.outcome.global, &test, config.target_class, |g| {
        let parts = generators
            .iter()
            .map(|gen| generate_shifter(gen, g, config.n_tri, config.f))
            .collect::<Result<Vec<_>, _>>()?;
        let s = aggregate_perturbations(&parts, config.f)?;
        integrity.check(
            s.positions.len() == crate::rng::budget(config.n_tri, g.num_nodes())
                && s.masked_dims() == crate::rng::budget(config.f, g.feature_dim()),
            || "aggregated shifter breaks the budget".into(),
        );
        let p = apply_shifter(g, &s, bounds)?;
        integrity.check(p.edges() == g.edges(), || "attack changed edges".into());
        Ok(p)
    })
}

pub fn baseline_asr(
    config: &ExperimentConfig,
    cell: &TrainedCell,
    dataset: &Dataset,
) -> Result<f64, ExperimentError> {
    let bounds = cell
        .outcome
        .attack_bounds
        .as_ref()
        .ok_or_else(|| ExperimentError::Metric("no malicious clients".into()))?;
    let test = cell.test_graphs(dataset);
    compute_asr(&cell.outcome.global, &test, config.target_class, |g| {
        let s = random_trigger_baseline(g, config.n_tri, config.f, bounds, cell.outcome.trigger_seed)?;
        Ok(apply_shifter(g, &s, bounds)?)
    })
}

pub struct Stage2Result {
    /// ASR before any Stage-2 step.
    pub initial_asr: f64,
    pub trace: Vec<TracePoint>,
    pub generators: Vec<GeneratorParams>,
    pub integrity: IntegrityReport,
}

impl Stage2Result {
    pub fn final_asr(&self) -> f64 {
        self.trace.last().map_or(self.initial_asr, |t| t.asr)
    }

    /// First epoch whose ASR reaches `goal` (0 if already there).
    pub fn epochs_to(&self, goal: f64) -> Option<usize> {
        if self.initial_asr >= goal {
            return Some(0);
        }
        self.trace.iter().find(|t| t.asr >= goal).map(|t| t.epoch)
    }
}

/// Stage 2 for every malicious client in lockstep against the frozen final
/// model, measuring the aggregated-attack ASR after each epoch.
pub fn run_stage2(
    config: &ExperimentConfig,
    cell: &TrainedCell,
    dataset: &Dataset,
    start: StartPoint,
    epochs: usize,
) -> Result<Stage2Result, ExperimentError> {
    let attack = config.attack();
    let frozen = &cell.outcome.global;
    let digest = frozen.digest();
    let mut integrity = IntegrityReport::default();
    let mut generators: Vec<GeneratorParams> = cell
        .outcome
        .malicious
        .iter()
        .map(|m| match start {
            StartPoint::Trained => m.generator.clone(),
            StartPoint::Stage1 => m.stage1_generator.clone(),
            StartPoint::Cold => m.initial_generator.clone(),
        })
        .collect();
    let locals: Vec<Vec<&Graph>> = cell
        .outcome
        .malicious
        .iter()
        .map(|m| {
            cell.outcome.clients[m.client]
                .indices
                .iter()
                .map(|&i| dataset.graph(i))
                .collect()
        })
        .collect();
    let initial_asr = fedshift_asr(config, cell, &generators, dataset, &mut integrity)?;
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let mut loss = 0.0;
        for ((gen, m), graphs) in generators.iter_mut().zip(&cell.outcome.malicious).zip(&locals) {
            loss += stage2_epoch(gen, frozen, graphs, &m.plan.eligible, &m.bounds, &attack)?.total;
        }
        loss /= generators.len().max(1) as f64;
        let asr = fedshift_asr(config, cell, &generators, dataset, &mut integrity)?;
        trace.push(TracePoint { epoch, asr, loss });
    }
    integrity.check(frozen.digest() == digest, || "global model changed in stage 2".into());
    Ok(Stage2Result {
        initial_asr,
        trace,
        generators,
        integrity,
    })
}
