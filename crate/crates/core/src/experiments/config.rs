use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::attack::{AttackConfig, GeneratorKind};
use crate::federation::AggregatorKind;
use crate::gnn::{ModelKind, TrainConfig};
use crate::graph::SyntheticSpec;
use crate::rng::derive_seed;

/// Every knob of an experiment. Serialized as flat TOML; unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `"synthetic"`, a TU dataset directory, or a cached `.json` dataset.
    pub dataset: String,
    pub synthetic_graphs_per_class: usize,
    pub synthetic_min_nodes: usize,
    pub synthetic_max_nodes: usize,
    pub synthetic_feature_dim: usize,
    pub synthetic_mean_gap: f64,
    pub synthetic_noise_std: f64,
    pub synthetic_signal_dims: usize,
    pub synthetic_intra_density: f64,
    pub train_ratio: f64,

    pub clients: usize,
    pub malicious: usize,
    pub rounds: usize,
    pub aggregator: AggregatorKind,
    pub weighted_fedavg: bool,

    pub model: ModelKind,
    pub hidden: Vec<usize>,
    pub local_epochs: usize,
    pub local_lr: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,

    pub target_class: usize,
    pub p: f64,
    pub f: f64,
    pub n_tri: f64,
    pub k: usize,
    pub lambda_dist: f64,
    pub lambda_homo: f64,
    pub lambda_ce: f64,
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub tune_epochs: usize,
    pub recluster_every: usize,
    pub fl_tune: bool,
    pub stage2_lr: f64,
    pub stage2_epochs: usize,
    pub cold_start: bool,
    pub generator: GeneratorKind,
    pub generator_hidden: usize,
    pub kmeans_iters: usize,
    /// ASR at which a Stage-2 run counts as converged.
    pub asr_goal: f64,

    pub seed: u64,
    pub repetitions: usize,
    pub q1_clients: Vec<usize>,
    pub q2_aggregators: Vec<AggregatorKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let a = AttackConfig::default();
        let s = SyntheticSpec::default();
        Self {
            dataset: "synthetic".into(),
            synthetic_graphs_per_class: s.graphs_per_class,
            synthetic_min_nodes: 40,
            synthetic_max_nodes: 60,
            synthetic_feature_dim: s.feature_dim,
            synthetic_mean_gap: 0.5,
            synthetic_noise_std: s.noise_std,
            synthetic_signal_dims: s.signal_dims,
            synthetic_intra_density: s.intra_density,
            train_ratio: 0.8,
            clients: 10,
            malicious: 2,
            rounds: 40,
            aggregator: AggregatorKind::FedAvg,
            weighted_fedavg: false,
            model: ModelKind::Gat,
            hidden: vec![16, 16],
            local_epochs: 3,
            local_lr: 0.1,
            batch_size: 32,
            pretrain_epochs: 150,
            target_class: a.target_class,
            p: a.p,
            f: a.f,
            n_tri: a.n_tri,
            k: a.k,
            lambda_dist: a.lambda_dist,
            lambda_homo: a.lambda_homo,
            lambda_ce: a.lambda_ce,
            tau: a.tau,
            lr: 0.1,
            epochs: a.epochs,
            tune_epochs: a.tune_epochs,
            recluster_every: a.recluster_every,
            fl_tune: true,
            stage2_lr: a.stage2_lr,
            stage2_epochs: a.stage2_epochs,
            cold_start: false,
            generator: a.generator,
            generator_hidden: a.generator_hidden,
            kmeans_iters: a.kmeans_iters,
            asr_goal: 0.8,
            seed: 0,
            repetitions: 5,
            q1_clients: vec![10, 20, 40],
            q2_aggregators: AggregatorKind::ALL.to_vec(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        Self::from_table(text.parse::<toml::Table>().map_err(|e| ExperimentError::Config(e.to_string()))?)
    }

    fn from_table(table: toml::Table) -> Result<Self, ExperimentError> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ExperimentError::Config(e.message().to_string()))
    }

    /// Parses `key=value`; the value is read as a TOML literal, falling back
    /// to a bare string.
    pub fn parse_override(item: &str) -> Result<(String, toml::Value), ExperimentError> {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config(format!("override {item:?} is not key=value")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ExperimentError::Config(format!("override {item:?} has no key")));
        }
        Ok((k.to_string(), parse_value(v)))
    }

    /// A copy with `key=value` overrides applied and re-checked.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ExperimentError> {
        let mut table = toml::Table::try_from(self).map_err(|e| ExperimentError::Config(e.to_string()))?;
        for item in overrides {
            let (k, v) = Self::parse_override(item)?;
            if !table.contains_key(&k) {
                return Err(ExperimentError::Config(format!("unknown key {k:?}")));
            }
            table.insert(k, v);
        }
        Self::from_table(table)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every violated constraint; empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.attack().violations();
        if self.seed > i64::MAX as u64 {
            out.push(format!("seed = {} must fit a TOML integer (at most {})", self.seed, i64::MAX));
        }
        if self.clients < 2 {
            out.push(format!("clients = {} must be at least 2", self.clients));
        }
        if self.malicious >= self.clients {
            out.push(format!(
                "malicious = {} must be below clients = {}",
                self.malicious, self.clients
            ));
        }
        if let Some(&n) = self.q1_clients.iter().find(|&&n| n <= self.malicious) {
            out.push(format!("q1_clients entry {n} must exceed malicious = {}", self.malicious));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            out.push(format!("train_ratio = {} must lie in (0, 1)", self.train_ratio));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            out.push("hidden must list positive layer widths".into());
        }
        if !(self.local_lr > 0.0 && self.local_lr.is_finite()) {
            out.push(format!("local_lr = {} must be positive", self.local_lr));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".into());
        }
        if self.repetitions == 0 {
            out.push("repetitions must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.asr_goal) {
            out.push(format!("asr_goal = {} must lie in [0, 1]", self.asr_goal));
        }
        if self.dataset == "synthetic" {
            if let Err(e) = self.synthetic_spec().validate() {
                out.push(format!("synthetic data: {e}"));
            }
            if self.target_class >= 2 {
                out.push(format!("target_class = {} but synthetic data has 2 classes", self.target_class));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Invalid(v))
        }
    }

    pub fn attack(&self) -> AttackConfig {
        AttackConfig {
            target_class: self.target_class,
            p: self.p,
            f: self.f,
            n_tri: self.n_tri,
            k: self.k,
            lambda_dist: self.lambda_dist,
            lambda_homo: self.lambda_homo,
            lambda_ce: self.lambda_ce,
            tau: self.tau,
            lr: self.lr,
            epochs: self.epochs,
            tune_epochs: self.tune_epochs,
            recluster_every: self.recluster_every,
            stage2_lr: self.stage2_lr,
            stage2_epochs: self.stage2_epochs,
            generator: self.generator,
            generator_hidden: self.generator_hidden,
            kmeans_iters: self.kmeans_iters,
        }
    }

    pub fn local_training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.local_epochs,
            lr: self.local_lr,
            batch_size: self.batch_size,
        }
    }

    pub fn pretraining(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.pretrain_epochs,
            ..self.local_training()
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: 2,
            graphs_per_class: self.synthetic_graphs_per_class,
            min_nodes: self.synthetic_min_nodes,
            max_nodes: self.synthetic_max_nodes,
            feature_dim: self.synthetic_feature_dim,
            seed: derive_seed(self.seed, "dataset", &[]),
            intra_density: self.synthetic_intra_density,
            mean_gap: self.synthetic_mean_gap,
            noise_std: self.synthetic_noise_std,
            signal_dims: self.synthetic_signal_dims,
        }
    }

    /// Seed of repetition `r`.
    pub fn repetition_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, "repetition", &[r as u64])
    }
}
