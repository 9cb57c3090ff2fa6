use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::autodiff::{Matrix, Tape, Tensor, Var};
use crate::checkpoint::Record;
use crate::gnn::{GraphStructure, ModelKind, EMBED_SLOPE};
use crate::graph::Graph;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    /// Per-node MLP over `[x_v, mean(X)]`.
    Mlp,
    /// One GCN layer over the whole graph followed by a linear head.
    Gcn,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::Gcn => "gcn",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "gcn" => Ok(Self::Gcn),
            other => Err(format!("unknown generator kind {other:?} (mlp|gcn)")),
        }
    }
}

/// Shifter generator weights. The output layer starts at zero, so a fresh
/// generator emits no perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    kind: GeneratorKind,
    feature_dim: usize,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    /// Fixed per-dimension output scale.
    scale: Vec<f64>,
}

pub(crate) struct BoundGenerator {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

impl BoundGenerator {
    pub(crate) fn vars(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

impl GeneratorParams {
    pub fn new(
        kind: GeneratorKind,
        feature_dim: usize,
        hidden: usize,
        scale: Vec<f64>,
        rng: &mut StreamRng,
    ) -> Result<Self, AttackError> {
        if feature_dim == 0 || hidden == 0 {
            return Err(AttackError::Invalid(format!(
                "generator dims {feature_dim} x {hidden}"
            )));
        }
        if scale.len() != feature_dim || scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(AttackError::Invalid(
                "generator scale must be positive, one entry per feature".into(),
            ));
        }
        let fan_in = match kind {
            GeneratorKind::Mlp => 2 * feature_dim,
            GeneratorKind::Gcn => feature_dim,
        };
        let limit = (6.0 / (fan_in + hidden) as f64).sqrt();
        let w1 = (0..fan_in * hidden)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Ok(Self {
            kind,
            feature_dim,
            w1: Tensor::parameter(Matrix::new(fan_in, hidden, w1)?),
            b1: Tensor::parameter(Matrix::zeros(1, hidden)),
            w2: Tensor::parameter(Matrix::zeros(hidden, feature_dim)),
            b2: Tensor::parameter(Matrix::zeros(1, feature_dim)),
            scale,
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hidden(&self) -> usize {
        self.b1.value().cols()
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.value().data().iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.value().is_finite())
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> BoundGenerator {
        BoundGenerator {
            w1: tape.param(&self.w1),
            b1: tape.param(&self.b1),
            w2: tape.param(&self.w2),
            b2: tape.param(&self.b2),
        }
    }

    /// Raw per-position perturbations (|positions| x d), before masking.
    pub(crate) fn raw_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundGenerator,
        graph: &Graph,
        positions: &[usize],
    ) -> Result<Var, AttackError> {
        if graph.feature_dim() != self.feature_dim {
            return Err(AttackError::Invalid(format!(
                "graph feature dim {} but generator expects {}",
                graph.feature_dim(),
                self.feature_dim
            )));
        }
        let x = tape.constant(graph.features().clone());
        let hidden = match self.kind {
            GeneratorKind::Mlp => {
                let rows = tape.row_gather(x, positions)?;
                let mean = tape.mean_rows(x)?;
                let context = tape.row_gather(mean, &vec![0; positions.len()])?;
                let input = tape.concat_cols(&[rows, context])?;
                let z = tape.matmul(input, bound.w1)?;
                let z = tape.add_row(z, bound.b1)?;
                tape.leaky_relu(z, EMBED_SLOPE)
            }
            GeneratorKind::Gcn => {
                let GraphStructure::Gcn(adj) = GraphStructure::new(ModelKind::Gcn, graph) else {
                    unreachable!("gcn structure requested")
                };
                let adj = tape.constant(adj);
                let xw = tape.matmul(x, bound.w1)?;
                let z = tape.matmul(adj, xw)?;
                let z = tape.add_row(z, bound.b1)?;
                let h = tape.leaky_relu(z, EMBED_SLOPE);
                tape.row_gather(h, positions)?
            }
        };
        let out = tape.matmul(hidden, bound.w2)?;
        let out = tape.add_row(out, bound.b2)?;
        let scale = tape.constant(Matrix::new(
            positions.len(),
            self.feature_dim,
            self.scale.repeat(positions.len()),
        )?);
        Ok(tape.mul(out, scale)?)
    }

    pub fn raw(&self, graph: &Graph, positions: &[usize]) -> Result<Matrix, AttackError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let out = self.raw_on_tape(&mut tape, &bound, graph, positions)?;
        Ok(tape.value(out).clone())
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new("generator");
        r.meta.push(("generator".into(), self.kind.as_str().into()));
        r.meta.push(("feature_dim".into(), self.feature_dim.to_string()));
        r.meta.push(("hidden".into(), self.hidden().to_string()));
        for (name, t) in ["w1", "b1", "w2", "b2"].into_iter().zip(self.tensors()) {
            r.tensors.push((name.into(), t.value().clone()));
        }
        r.tensors
            .push(("scale".into(), Matrix::row_vector(self.scale.clone())));
        r
    }

    pub fn from_record(mut record: Record) -> Result<Self, AttackError> {
        record.expect_kind("generator")?;
        let kind: GeneratorKind = record
            .meta("generator")?
            .parse()
            .map_err(AttackError::Invalid)?;
        let d = record.meta_usize("feature_dim")?;
        let hidden = record.meta_usize("hidden")?;
        if d == 0 || hidden == 0 || d > 1 << 16 || hidden > 1 << 16 {
            return Err(AttackError::Invalid(format!("generator dims {d} x {hidden}")));
        }
        let scale = record.take_tensor("scale", (1, d))?.into_data();
        let mut rng = crate::rng::stream(0, "template", &[]);
        let mut out = Self::new(kind, d, hidden, scale, &mut rng)?;
        for (name, t) in ["w1", "b1", "w2", "b2"].into_iter().zip(out.tensors_mut()) {
            let m = record.take_tensor(name, t.shape())?;
            *t.value_mut() = m;
        }
        if let Some((extra, _)) = record.tensors.first() {
            return Err(AttackError::Invalid(format!("unexpected tensor {extra:?}")));
        }
        Ok(out)
    }
}
