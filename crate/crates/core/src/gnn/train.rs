use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{GnnParams, ModelError};
use crate::autodiff::{sgd_step, Tape};
use crate::graph::Graph;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            lr: 0.01,
            batch_size: 32,
        }
    }
}

/// Accumulates the batch-mean cross-entropy gradient into `params` and
/// returns the summed loss.
fn accumulate_batch(
    params: &mut GnnParams,
    graphs: &[&Graph],
    scale: f64,
) -> Result<f64, ModelError> {
    let classes = params.architecture().num_classes;
    let mut total = 0.0;
    for g in graphs {
        if g.label() >= classes {
            return Err(ModelError::Label {
                label: g.label(),
                classes,
            });
        }
        params.check_graph(g)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true);
        let x = tape.constant(g.features().clone());
        let emb = params.embed_on_tape(&mut tape, &bound, &params.structure(g), x)?;
        let logits = params.classify_on_tape(&mut tape, &bound, emb)?;
        let loss = tape.cross_entropy(logits, g.label())?;
        let loss = tape.scale(loss, scale);
        total += tape.value(loss).item() / scale;
        let grads = tape.backward(loss)?;
        for (var, t) in bound.vars().into_iter().zip(params.tensors_mut()) {
            grads.accumulate_into(var, t);
        }
    }
    Ok(total)
}

/// Minibatch SGD on cross-entropy. Returns the mean loss of each epoch.
pub fn train_local(
    params: &mut GnnParams,
    graphs: &[&Graph],
    config: &TrainConfig,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, ModelError> {
    if graphs.is_empty() {
        return Err(ModelError::NoData);
    }
    if config.batch_size == 0 || !(config.lr > 0.0) {
        return Err(ModelError::Architecture(format!(
            "batch size {} and learning rate {} must be positive",
            config.batch_size, config.lr
        )));
    }
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Graph> = chunk.iter().map(|&i| graphs[i]).collect();
            params.clear_grads();
            epoch_loss += accumulate_batch(params, &batch, 1.0 / batch.len() as f64)?;
            let mut tensors = params.tensors_mut();
            sgd_step(&mut tensors, config.lr)?;
        }
        if !params.is_finite() {
            return Err(ModelError::NonFinite);
        }
        losses.push(epoch_loss / graphs.len() as f64);
    }
    Ok(losses)
}

/// Mean cross-entropy over `graphs`.
pub fn mean_loss(params: &GnnParams, graphs: &[&Graph]) -> Result<f64, ModelError> {
    if graphs.is_empty() {
        return Err(ModelError::NoData);
    }
    let mut total = 0.0;
    for g in graphs {
        let (_, logits) = params.forward(g)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - logits[g.label()];
    }
    Ok(total / graphs.len() as f64)
}

/// Argmax class; ties go to the lowest index.
pub fn predict(params: &GnnParams, graph: &Graph) -> Result<usize, ModelError> {
    let (_, logits) = params.forward(graph)?;
    Ok(argmax(&logits))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `graphs` predicted as their own label.
pub fn evaluate_accuracy(params: &GnnParams, graphs: &[&Graph]) -> Result<f64, ModelError> {
    if graphs.is_empty() {
        return Err(ModelError::NoData);
    }
    let mut correct = 0usize;
    for g in graphs {
        if predict(params, g)? == g.label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / graphs.len() as f64)
}
