//! Federated training rounds with optional malicious clients.
//!
//! Clients are trained one after another in id order each round, so a run
//! is a pure function of its configuration and seed.

mod aggregate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{bulyan, fedavg, foolsgold, foolsgold_weights, krum, AggregatorKind};

use crate::attack::{
    apply_shifter, build_poison_plan, fl_tune, generate_shifter, random_trigger_baseline,
    stage1_train, target_centroids, AttackConfig, AttackError, ClusterModel, FeatureBounds,
    GeneratorParams, PoisonPlan, StageLosses,
};
use crate::gnn::{evaluate_accuracy, train_local, Architecture, GnnParams, ModelError, TrainConfig};
use crate::graph::{Dataset, Graph, Partition};
use crate::rng::{budget, derive_seed, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederationError {
    #[error("aggregation failed: {0}")]
    Aggregation(String),
    #[error("round {round}: {message}")]
    Round { round: usize, message: String },
    #[error("client {client}: {error}")]
    Client { client: usize, error: AttackError },
    #[error("invalid federation setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Benign,
    Malicious,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub arch: Architecture,
    pub rounds: usize,
    /// Malicious clients are ids `0..malicious`.
    pub malicious: usize,
    pub aggregator: AggregatorKind,
    /// Weight FedAvg by local dataset size instead of uniformly.
    pub weighted_fedavg: bool,
    pub local: TrainConfig,
    pub seed: u64,
}

/// What the malicious clients do during training.
#[derive(Clone, Debug, PartialEq)]
pub enum AttackSetup {
    None,
    FedShift {
        config: AttackConfig,
        fl_tune: bool,
        /// Local training that produces each attacker's reference model.
        pretrain: TrainConfig,
    },
    /// Random trigger on a fraction of non-target graphs, relabelled to the
    /// target class.
    Baseline { config: AttackConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    pub id: usize,
    pub role: Role,
    /// Indices into the dataset.
    pub indices: Vec<usize>,
}

/// Attack state a FedShift client carries out of federated training.
#[derive(Clone, Debug, PartialEq)]
pub struct MaliciousClient {
    pub client: usize,
    pub local_model: GnnParams,
    /// Generator before Stage 1, the cold-start point.
    pub initial_generator: GeneratorParams,
    /// Generator right after Stage 1, before any online tuning.
    pub stage1_generator: GeneratorParams,
    pub generator: GeneratorParams,
    pub plan: PoisonPlan,
    pub centroids: ClusterModel,
    pub bounds: FeatureBounds,
    pub stage1_losses: Vec<StageLosses>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Clean-test accuracy of the aggregated model; `None` without test data.
    pub oa: Option<f64>,
    pub aggregator: AggregatorKind,
    /// Client ids kept by Krum/Bulyan.
    pub selected: Vec<usize>,
    /// FoolsGold weights, client-id order.
    pub weights: Vec<f64>,
    /// `||theta_i - theta_t||` per client.
    pub update_norms: Vec<f64>,
}

/// Attack-invariant checks made during a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub checks: usize,
    pub violations: Vec<String>,
}

impl IntegrityReport {
    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(what());
        }
    }

    pub fn merge(&mut self, other: IntegrityReport) {
        self.checks += other.checks;
        self.violations.extend(other.violations);
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub global: GnnParams,
    pub records: Vec<RoundRecord>,
    pub clients: Vec<ClientState>,
    pub malicious: Vec<MaliciousClient>,
    /// Union of the malicious clients' feature ranges.
    pub attack_bounds: Option<FeatureBounds>,
    pub trigger_seed: u64,
    pub integrity: IntegrityReport,
}

fn label_checksum(graphs: &[Graph]) -> u64 {
    graphs
        .iter()
        .enumerate()
        .fold(0xcbf2_9ce4_8422_2325, |h, (i, g)| {
            (h ^ (i as u64).wrapping_mul(31).wrapping_add(g.label() as u64))
                .wrapping_mul(0x100_0000_01b3)
        })
}

/// Replaces the poisoned graphs of `original` with shifter-injected copies,
/// checking the attack invariants along the way.
pub fn poisoned_view(
    original: &[Graph],
    generator: &GeneratorParams,
    plan: &PoisonPlan,
    bounds: &FeatureBounds,
    config: &AttackConfig,
    integrity: &mut IntegrityReport,
) -> Result<Vec<Graph>, AttackError> {
    let mut view = original.to_vec();
    for &i in &plan.poison_indices {
        let g = &original[i];
        let s = generate_shifter(generator, g, config.n_tri, config.f)?;
        integrity.check(s.positions.len() == budget(config.n_tri, g.num_nodes()), || {
            format!("graph {i}: {} shifter nodes", s.positions.len())
        });
        integrity.check(s.masked_dims() == budget(config.f, g.feature_dim()), || {
            format!("graph {i}: {} masked dims", s.masked_dims())
        });
        let p = apply_shifter(g, &s, bounds)?;
        integrity.check(p.edges() == g.edges(), || format!("graph {i}: edges changed"));
        view[i] = p;
    }
    integrity.check(label_checksum(&view) == label_checksum(original), || {
        "poisoned view changed labels".into()
    });
    Ok(view)
}

struct FedShiftState {
    attacker: MaliciousClient,
    original: Vec<Graph>,
    view: Vec<Graph>,
}

fn setup_fedshift(
    client: usize,
    local: Vec<Graph>,
    init: &GnnParams,
    config: &AttackConfig,
    pretrain: &TrainConfig,
    seed: u64,
    integrity: &mut IntegrityReport,
) -> Result<FedShiftState, AttackError> {
    let refs: Vec<&Graph> = local.iter().collect();
    let mut local_model = init.clone();
    train_local(
        &mut local_model,
        &refs,
        pretrain,
        &mut stream(seed, "pretrain", &[client as u64]),
    )?;
    let centroids = target_centroids(
        &local_model,
        &refs,
        config.target_class,
        config.k,
        derive_seed(seed, "kmeans", &[client as u64]),
        config.kmeans_iters,
    )?;
    let plan = build_poison_plan(&refs, &local_model, config.target_class, config.p, &centroids)?;
    let bounds = FeatureBounds::from_graphs(&refs)?;
    let initial_generator = GeneratorParams::new(
        config.generator,
        local[0].feature_dim(),
        config.generator_hidden,
        bounds.half_range(),
        &mut stream(seed, "generator", &[client as u64]),
    )?;
    let mut generator = initial_generator.clone();
    let checksum = label_checksum(&local);
    let stage1_losses = stage1_train(
        &mut generator,
        &local_model,
        &refs,
        &plan,
        &centroids,
        &bounds,
        config,
    )?;
    integrity.check(label_checksum(&local) == checksum, || {
        format!("client {client}: labels changed during stage 1")
    });
    let view = poisoned_view(&local, &generator, &plan, &bounds, config, integrity)?;
    Ok(FedShiftState {
        attacker: MaliciousClient {
            client,
            local_model,
            initial_generator,
            stage1_generator: generator.clone(),
            generator,
            plan,
            centroids,
            bounds,
            stage1_losses,
        },
        original: local,
        view,
    })
}

fn baseline_view(
    client: usize,
    local: &[Graph],
    config: &AttackConfig,
    bounds: &FeatureBounds,
    trigger_seed: u64,
    seed: u64,
) -> Result<Vec<Graph>, AttackError> {
    use rand::seq::SliceRandom;
    let mut candidates: Vec<usize> = (0..local.len())
        .filter(|&i| local[i].label() != config.target_class)
        .collect();
    candidates.shuffle(&mut stream(seed, "baseline-pick", &[client as u64]));
    candidates.truncate(budget(config.p, candidates.len()));
    let mut view = local.to_vec();
    for i in candidates {
        let s = random_trigger_baseline(&local[i], config.n_tri, config.f, bounds, trigger_seed)?;
        view[i] = apply_shifter(&local[i], &s, bounds)?.with_label(config.target_class);
    }
    Ok(view)
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs `config.rounds` rounds of federated training.
pub fn run_training(
    config: &FederationConfig,
    dataset: &Dataset,
    partition: &Partition,
    attack: &AttackSetup,
) -> Result<TrainingOutcome, FederationError> {
    let n = partition.num_clients();
    if n < 2 {
        return Err(FederationError::Invalid(format!("{n} clients; need at least 2")));
    }
    if config.malicious >= n {
        return Err(FederationError::Invalid(format!(
            "{} malicious clients of {n}",
            config.malicious
        )));
    }
    if partition.client_indices.iter().any(Vec::is_empty) {
        return Err(FederationError::Invalid("a client has no data".into()));
    }
    if let AttackSetup::FedShift { config: a, .. } | AttackSetup::Baseline { config: a } = attack {
        let v = a.violations();
        if !v.is_empty() {
            return Err(FederationError::Invalid(v.join("; ")));
        }
        if a.target_class >= dataset.num_classes() {
            return Err(FederationError::Invalid(format!(
                "target class {} of {} classes",
                a.target_class,
                dataset.num_classes()
            )));
        }
    }
    let seed = config.seed;
    let clients: Vec<ClientState> = partition
        .client_indices
        .iter()
        .enumerate()
        .map(|(id, idx)| ClientState {
            id,
            role: if id < config.malicious && !matches!(attack, AttackSetup::None) {
                Role::Malicious
            } else {
                Role::Benign
            },
            indices: idx.clone(),
        })
        .collect();
    let local_data: Vec<Vec<Graph>> = clients
        .iter()
        .map(|c| c.indices.iter().map(|&i| dataset.graph(i).clone()).collect())
        .collect();
    let test: Vec<&Graph> = partition
        .test_indices
        .iter()
        .map(|&i| dataset.graph(i))
        .collect();

    let mut global = GnnParams::new(config.arch.clone(), &mut stream(seed, "init", &[]))?;
    let mut integrity = IntegrityReport::default();
    let trigger_seed = derive_seed(seed, "trigger", &[]);
    let malicious_ids: Vec<usize> = clients
        .iter()
        .filter(|c| c.role == Role::Malicious)
        .map(|c| c.id)
        .collect();
    let attack_bounds = if malicious_ids.is_empty() {
        None
    } else {
        let parts = malicious_ids
            .iter()
            .map(|&c| FeatureBounds::from_graphs(&local_data[c].iter().collect::<Vec<_>>()))
            .collect::<Result<Vec<_>, _>>()?;
        Some(FeatureBounds::union(&parts)?)
    };

    let mut fedshift: Vec<FedShiftState> = Vec::new();
    let mut views: Vec<Option<Vec<Graph>>> = vec![None; n];
    match attack {
        AttackSetup::None => {}
        AttackSetup::FedShift {
            config: a,
            pretrain,
            ..
        } => {
            for &c in &malicious_ids {
                let state =
                    setup_fedshift(c, local_data[c].clone(), &global, a, pretrain, seed, &mut integrity)
                        .map_err(|error| FederationError::Client { client: c, error })?;
                fedshift.push(state);
            }
        }
        AttackSetup::Baseline { config: a } => {
            let bounds = attack_bounds.as_ref().expect("malicious clients exist");
            for &c in &malicious_ids {
                views[c] = Some(
                    baseline_view(c, &local_data[c], a, bounds, trigger_seed, seed)
                        .map_err(|error| FederationError::Client { client: c, error })?,
                );
            }
        }
    }

    let mut histories = vec![vec![0.0; global.num_params()]; n];
    let mut records = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let base = global.flatten();
        if let AttackSetup::FedShift {
            config: a,
            fl_tune: true,
            ..
        } = attack
        {
            for state in &mut fedshift {
                let att = &mut state.attacker;
                let refs: Vec<&Graph> = state.original.iter().collect();
                if round > 0 && round % a.recluster_every == 0 {
                    att.centroids = target_centroids(
                        &global,
                        &refs,
                        a.target_class,
                        a.k,
                        derive_seed(seed, "kmeans", &[att.client as u64, round as u64]),
                        a.kmeans_iters,
                    )
                    .map_err(|error| FederationError::Client {
                        client: att.client,
                        error,
                    })?;
                }
                let checksum = label_checksum(&state.original);
                fl_tune(
                    &mut att.generator,
                    &global,
                    &refs,
                    &att.plan,
                    &att.centroids,
                    &att.bounds,
                    a,
                )?;
                integrity.check(label_checksum(&state.original) == checksum, || {
                    format!("client {}: labels changed during tuning", att.client)
                });
                state.view =
                    poisoned_view(&state.original, &att.generator, &att.plan, &att.bounds, a, &mut integrity)?;
            }
        }
        for state in &fedshift {
            views[state.attacker.client] = Some(state.view.clone());
        }

        let mut updates = Vec::with_capacity(n);
        for c in 0..n {
            let data = views[c].as_ref().unwrap_or(&local_data[c]);
            let refs: Vec<&Graph> = data.iter().collect();
            let mut local = global.clone();
            train_local(
                &mut local,
                &refs,
                &config.local,
                &mut stream(seed, "local", &[c as u64, round as u64]),
            )?;
            updates.push(local.flatten());
        }
        let update_norms: Vec<f64> = updates.iter().map(|u| norm_diff(u, &base)).collect();
        for (h, u) in histories.iter_mut().zip(&updates) {
            for ((hv, uv), bv) in h.iter_mut().zip(u).zip(&base) {
                *hv += uv - bv;
            }
        }
        let round_err = |e: FederationError| FederationError::Round {
            round,
            message: e.to_string(),
        };
        let mut selected = Vec::new();
        let mut weights = Vec::new();
        let next = match config.aggregator {
            AggregatorKind::FedAvg => {
                let sizes: Vec<f64> = clients.iter().map(|c| c.indices.len() as f64).collect();
                let w = config.weighted_fedavg.then_some(sizes.as_slice());
                fedavg(&updates, w).map_err(round_err)?
            }
            AggregatorKind::Krum => {
                let pick = krum(&updates, config.malicious).map_err(round_err)?;
                selected.push(pick);
                updates[pick].clone()
            }
            AggregatorKind::Bulyan => {
                let (sel, out) = bulyan(&updates, config.malicious).map_err(round_err)?;
                selected = sel;
                out
            }
            AggregatorKind::FoolsGold => {
                let (w, out) = foolsgold(&updates, &histories).map_err(round_err)?;
                weights = w;
                out
            }
        };
        global = global.with_flat(&next)?;
        if !global.is_finite() {
            return Err(FederationError::Round {
                round,
                message: "aggregated model is not finite".into(),
            });
        }
        let oa = if test.is_empty() {
            None
        } else {
            Some(evaluate_accuracy(&global, &test)?)
        };
        log::debug!("round {round}: oa {oa:?}");
        records.push(RoundRecord {
            round,
            oa,
            aggregator: config.aggregator,
            selected,
            weights,
            update_norms,
        });
    }

    Ok(TrainingOutcome {
        global,
        records,
        clients,
        malicious: fedshift.into_iter().map(|s| s.attacker).collect(),
        attack_bounds,
        trigger_seed,
        integrity,
    })
}
