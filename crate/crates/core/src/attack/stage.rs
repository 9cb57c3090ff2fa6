use serde::{Deserialize, Serialize};

use super::loss::{dist_on_tape, homo_on_tape};
use super::shifter::poisoned_features_on_tape;
use super::{
    nearest_centroid, shifter_positions, AttackConfig, AttackError, ClusterModel, FeatureBounds,
    GeneratorParams, PoisonPlan,
};
use crate::autodiff::{sgd_step, Matrix, Tape, Var};
use crate::gnn::GnnParams;
use crate::graph::Graph;

/// Mean loss terms over one pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLosses {
    pub total: f64,
    pub dist: f64,
    pub homo: f64,
    /// Source-label cross-entropy in Stage 1, target-label in Stage 2.
    pub ce: f64,
}

enum Objective<'a> {
    Stage1(&'a ClusterModel),
    Stage2,
}

fn weighted(tape: &mut Tape, terms: &[(f64, Var)]) -> Result<Var, AttackError> {
    let mut acc: Option<Var> = None;
    for &(w, v) in terms {
        if w == 0.0 {
            continue;
        }
        let s = tape.scale(v, w);
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    Ok(acc.unwrap_or_else(|| tape.constant(Matrix::scalar(0.0))))
}

/// One SGD pass of the generator over `indices` in order.
fn run_epoch(
    generator: &mut GeneratorParams,
    model: &GnnParams,
    graphs: &[&Graph],
    indices: &[usize],
    bounds: &FeatureBounds,
    config: &AttackConfig,
    objective: Objective<'_>,
) -> Result<StageLosses, AttackError> {
    let mut sums = StageLosses::default();
    if indices.is_empty() {
        return Ok(sums);
    }
    let lr = match objective {
        Objective::Stage1(_) => config.lr,
        Objective::Stage2 => config.stage2_lr,
    };
    for &i in indices {
        let graph = graphs
            .get(i)
            .ok_or_else(|| AttackError::Invalid(format!("graph index {i} out of range")))?;
        let positions = shifter_positions(graph, config.n_tri)?;
        let mut tape = Tape::new();
        let gen_vars = generator.bind(&mut tape);
        let x = poisoned_features_on_tape(
            &mut tape, generator, &gen_vars, graph, &positions, config.f, bounds,
        )?;
        let frozen = model.bind(&mut tape, false);
        let structure = model.structure(graph);
        let emb = model.embed_on_tape(&mut tape, &frozen, &structure, x)?;
        let logits = model.classify_on_tape(&mut tape, &frozen, emb)?;
        let homo = homo_on_tape(&mut tape, x, graph, config.tau)?;
        let (total, dist, ce) = match objective {
            Objective::Stage1(centroids) => {
                let c_near = nearest_centroid(tape.value(emb).data(), centroids).clone();
                let dist = dist_on_tape(&mut tape, emb, &c_near)?;
                let ce = tape.cross_entropy(logits, graph.label())?;
                let total = weighted(
                    &mut tape,
                    &[
                        (config.lambda_dist, dist),
                        (config.lambda_homo, homo),
                        (config.lambda_ce, ce),
                    ],
                )?;
                (total, tape.value(dist).item(), ce)
            }
            Objective::Stage2 => {
                let ce = tape.cross_entropy(logits, config.target_class)?;
                let total = weighted(&mut tape, &[(1.0, ce), (config.lambda_homo, homo)])?;
                (total, 0.0, ce)
            }
        };
        sums.total += tape.value(total).item();
        sums.dist += dist;
        sums.homo += tape.value(homo).item();
        sums.ce += tape.value(ce).item();

        let grads = tape.backward(total)?;
        let mut tensors = generator.tensors_mut();
        for (var, t) in gen_vars.vars().into_iter().zip(tensors.iter_mut()) {
            t.clear_grad();
            grads.accumulate_into(var, t);
            if t.grad().is_none() {
                let (r, c) = t.shape();
                t.accumulate_grad(&Matrix::zeros(r, c));
            }
        }
        sgd_step(&mut tensors, lr)?;
        if !generator.is_finite() {
            return Err(AttackError::Invalid("generator diverged".into()));
        }
    }
    let n = indices.len() as f64;
    Ok(StageLosses {
        total: sums.total / n,
        dist: sums.dist / n,
        homo: sums.homo / n,
        ce: sums.ce / n,
    })
}

/// One pass of the Stage-1 objective over the plan's poisoned graphs.
pub fn stage1_epoch(
    generator: &mut GeneratorParams,
    model: &GnnParams,
    graphs: &[&Graph],
    plan: &PoisonPlan,
    centroids: &ClusterModel,
    bounds: &FeatureBounds,
    config: &AttackConfig,
) -> Result<StageLosses, AttackError> {
    run_epoch(
        generator,
        model,
        graphs,
        &plan.poison_indices,
        bounds,
        config,
        Objective::Stage1(centroids),
    )
}

/// Trains the generator against the local model for `config.epochs` passes.
pub fn stage1_train(
    generator: &mut GeneratorParams,
    local_model: &GnnParams,
    graphs: &[&Graph],
    plan: &PoisonPlan,
    centroids: &ClusterModel,
    bounds: &FeatureBounds,
    config: &AttackConfig,
) -> Result<Vec<StageLosses>, AttackError> {
    (0..config.epochs)
        .map(|_| stage1_epoch(generator, local_model, graphs, plan, centroids, bounds, config))
        .collect()
}

/// `config.tune_epochs` Stage-1 passes against the current global model.
pub fn fl_tune(
    generator: &mut GeneratorParams,
    global: &GnnParams,
    graphs: &[&Graph],
    plan: &PoisonPlan,
    centroids: &ClusterModel,
    bounds: &FeatureBounds,
    config: &AttackConfig,
) -> Result<Vec<StageLosses>, AttackError> {
    (0..config.tune_epochs)
        .map(|_| stage1_epoch(generator, global, graphs, plan, centroids, bounds, config))
        .collect()
}

/// One pass of the Stage-2 objective over `pool` against a frozen model.
pub fn stage2_epoch(
    generator: &mut GeneratorParams,
    frozen: &GnnParams,
    graphs: &[&Graph],
    pool: &[usize],
    bounds: &FeatureBounds,
    config: &AttackConfig,
) -> Result<StageLosses, AttackError> {
    run_epoch(generator, frozen, graphs, pool, bounds, config, Objective::Stage2)
}

/// Runs `config.stage2_epochs` Stage-2 passes. `after_epoch` is called with
/// the generator after each pass, e.g. to record an ASR trace.
pub fn stage2_finetune<F>(
    generator: &mut GeneratorParams,
    frozen: &GnnParams,
    graphs: &[&Graph],
    pool: &[usize],
    bounds: &FeatureBounds,
    config: &AttackConfig,
    mut after_epoch: F,
) -> Result<Vec<StageLosses>, AttackError>
where
    F: FnMut(usize, &GeneratorParams, &StageLosses) -> Result<(), AttackError>,
{
    let mut out = Vec::with_capacity(config.stage2_epochs);
    for epoch in 0..config.stage2_epochs {
        let losses = stage2_epoch(generator, frozen, graphs, pool, bounds, config)?;
        after_epoch(epoch + 1, generator, &losses)?;
        out.push(losses);
    }
    Ok(out)
}
