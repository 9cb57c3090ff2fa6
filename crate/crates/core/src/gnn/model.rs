use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Embedding, ModelError};
use crate::autodiff::{Matrix, Tape, Tensor, Var};
use crate::checkpoint::Record;
use crate::graph::Graph;
use crate::rng::StreamRng;

/// Slope of the leaky ReLU between message-passing layers.
pub const EMBED_SLOPE: f64 = 0.01;
/// Slope inside GAT attention scores.
const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gat,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gcn => "gcn",
            Self::Gat => "gat",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            other => Err(format!("unknown model kind {other:?} (gcn|gat)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub in_dim: usize,
    /// Output width of each message-passing layer; the last is the
    /// embedding width.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    pub fn new(kind: ModelKind, in_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        Self {
            kind,
            in_dim,
            hidden,
            num_classes,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        *self.hidden.last().unwrap_or(&self.in_dim)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.in_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ModelError::Architecture(format!(
                "in_dim {} and hidden widths {:?} must be positive and non-empty",
                self.in_dim, self.hidden
            )));
        }
        if self.num_classes < 2 {
            return Err(ModelError::Architecture(format!(
                "{} classes",
                self.num_classes
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    weight: Tensor,
    bias: Tensor,
    att_src: Option<Tensor>,
    att_dst: Option<Tensor>,
}

/// Parameters of a graph classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    arch: Architecture,
    layers: Vec<Layer>,
    classifier_weight: Tensor,
    classifier_bias: Tensor,
}

fn glorot(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::new(rows, cols, data).expect("sized")
}

/// Per-graph message-passing structure, precomputed once per graph.
#[derive(Clone, Debug)]
pub enum GraphStructure {
    /// `D^-1/2 (A + I) D^-1/2`, rows aggregate into the target node.
    Gcn(Matrix),
    /// Message sources and targets, self-loops included.
    Gat { src: Vec<usize>, dst: Vec<usize> },
}

impl GraphStructure {
    pub fn new(kind: ModelKind, graph: &Graph) -> Self {
        let n = graph.num_nodes();
        let mut pairs = graph.message_pairs();
        pairs.extend((0..n).map(|v| (v, v)));
        match kind {
            ModelKind::Gcn => {
                let mut deg = vec![0.0f64; n];
                for &(_, dst) in &pairs {
                    deg[dst] += 1.0;
                }
                let mut adj = Matrix::zeros(n, n);
                for &(src, dst) in &pairs {
                    let w = 1.0 / (deg[dst] * deg[src]).sqrt();
                    adj.set(dst, src, adj.get(dst, src) + w);
                }
                Self::Gcn(adj)
            }
            ModelKind::Gat => {
                pairs.sort_by_key(|&(s, d)| (d, s));
                let (src, dst) = pairs.into_iter().unzip();
                Self::Gat { src, dst }
            }
        }
    }
}

struct BoundLayer {
    weight: Var,
    bias: Var,
    att: Option<(Var, Var)>,
}

/// Parameter leaves recorded on a tape for one forward pass.
pub struct BoundParams {
    layers: Vec<BoundLayer>,
    classifier_weight: Var,
    classifier_bias: Var,
}

impl BoundParams {
    /// Every leaf in [`GnnParams::tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight);
            out.push(l.bias);
            if let Some((s, d)) = l.att {
                out.push(s);
                out.push(d);
            }
        }
        out.push(self.classifier_weight);
        out.push(self.classifier_bias);
        out
    }
}

impl GnnParams {
    pub fn new(arch: Architecture, rng: &mut StreamRng) -> Result<Self, ModelError> {
        arch.validate()?;
        let mut layers = Vec::with_capacity(arch.hidden.len());
        let mut width = arch.in_dim;
        for &out in &arch.hidden {
            let (att_src, att_dst) = match arch.kind {
                ModelKind::Gat => (
                    Some(Tensor::parameter(glorot(out, 1, rng))),
                    Some(Tensor::parameter(glorot(out, 1, rng))),
                ),
                ModelKind::Gcn => (None, None),
            };
            layers.push(Layer {
                weight: Tensor::parameter(glorot(width, out, rng)),
                bias: Tensor::parameter(Matrix::zeros(1, out)),
                att_src,
                att_dst,
            });
            width = out;
        }
        Ok(Self {
            classifier_weight: Tensor::parameter(glorot(width, arch.num_classes, rng)),
            classifier_bias: Tensor::parameter(Matrix::zeros(1, arch.num_classes)),
            arch,
            layers,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let (Some(s), Some(d)) = (&l.att_src, &l.att_dst) {
                out.push(s);
                out.push(d);
            }
        }
        out.push(&self.classifier_weight);
        out.push(&self.classifier_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let (Some(s), Some(d)) = (&mut l.att_src, &mut l.att_dst) {
                out.push(s);
                out.push(d);
            }
        }
        out.push(&mut self.classifier_weight);
        out.push(&mut self.classifier_bias);
        out
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("layer{i}.weight"));
            out.push(format!("layer{i}.bias"));
            if l.att_src.is_some() {
                out.push(format!("layer{i}.att_src"));
                out.push(format!("layer{i}.att_dst"));
            }
        }
        out.push("classifier.weight".into());
        out.push("classifier.bias".into());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.value().len()).sum()
    }

    /// All values concatenated in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.value().data());
        }
        out
    }

    /// A copy with values taken from `flat` (same layout as [`Self::flatten`]).
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self, ModelError> {
        if flat.len() != self.num_params() {
            return Err(ModelError::FlatLength {
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors_mut() {
            t.clear_grad();
            let len = t.value().len();
            t.value_mut()
                .data_mut()
                .copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.value().is_finite())
    }

    /// SHA-256 over the architecture and the exact bit patterns of all values.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.arch.kind.as_str().as_bytes());
        for w in &self.arch.hidden {
            h.update((*w as u64).to_le_bytes());
        }
        for v in self.flatten() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn clear_grads(&mut self) {
        for t in self.tensors_mut() {
            t.clear_grad();
        }
    }

    /// Records the parameters as leaves; `trainable = false` records them as
    /// constants so no gradient reaches them.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let mut leaf = |t: &Tensor| tape.leaf(t.value().clone(), trainable && t.requires_grad());
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                weight: leaf(&l.weight),
                bias: leaf(&l.bias),
                att: match (&l.att_src, &l.att_dst) {
                    (Some(s), Some(d)) => Some((leaf(s), leaf(d))),
                    _ => None,
                },
            })
            .collect();
        BoundParams {
            layers,
            classifier_weight: leaf(&self.classifier_weight),
            classifier_bias: leaf(&self.classifier_bias),
        }
    }

    pub fn check_graph(&self, graph: &Graph) -> Result<(), ModelError> {
        if graph.num_nodes() == 0 {
            return Err(ModelError::EmptyGraph);
        }
        if graph.feature_dim() != self.arch.in_dim {
            return Err(ModelError::FeatureDim {
                expected: self.arch.in_dim,
                found: graph.feature_dim(),
            });
        }
        Ok(())
    }

    /// Mean-pooled embedding (1 x embedding_dim) of node features `x`.
    pub fn embed_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        structure: &GraphStructure,
        x: Var,
    ) -> Result<Var, ModelError> {
        let n = tape.value(x).rows();
        if tape.value(x).cols() != self.arch.in_dim {
            return Err(ModelError::FeatureDim {
                expected: self.arch.in_dim,
                found: tape.value(x).cols(),
            });
        }
        let mut h = x;
        let adj = match structure {
            GraphStructure::Gcn(a) => Some(tape.constant(a.clone())),
            GraphStructure::Gat { .. } => None,
        };
        for layer in &bound.layers {
            let xw = tape.matmul(h, layer.weight)?;
            let aggregated = match (structure, layer.att) {
                (GraphStructure::Gcn(_), _) => tape.matmul(adj.expect("gcn adjacency"), xw)?,
                (GraphStructure::Gat { src, dst }, Some((a_src, a_dst))) => {
                    let s_src = tape.matmul(xw, a_src)?;
                    let s_dst = tape.matmul(xw, a_dst)?;
                    let e_src = tape.row_gather(s_src, src)?;
                    let e_dst = tape.row_gather(s_dst, dst)?;
                    let scores = tape.add(e_src, e_dst)?;
                    let scores = tape.leaky_relu(scores, ATTENTION_SLOPE);
                    let alpha = tape.segment_softmax(scores, dst, n)?;
                    let messages = tape.row_gather(xw, src)?;
                    let weighted = tape.mul_col(messages, alpha)?;
                    tape.row_scatter_add(weighted, dst, n)?
                }
                (GraphStructure::Gat { .. }, None) => {
                    return Err(ModelError::Architecture(
                        "attention structure given to a GCN model".into(),
                    ))
                }
            };
            let biased = tape.add_row(aggregated, layer.bias)?;
            h = tape.leaky_relu(biased, EMBED_SLOPE);
        }
        Ok(tape.mean_rows(h)?)
    }

    pub fn classify_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        embedding: Var,
    ) -> Result<Var, ModelError> {
        let z = tape.matmul(embedding, bound.classifier_weight)?;
        Ok(tape.add_row(z, bound.classifier_bias)?)
    }

    pub fn structure(&self, graph: &Graph) -> GraphStructure {
        GraphStructure::new(self.arch.kind, graph)
    }

    /// Embedding and class logits.
    pub fn forward(&self, graph: &Graph) -> Result<(Embedding, Vec<f64>), ModelError> {
        self.check_graph(graph)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(graph.features().clone());
        let emb = self.embed_on_tape(&mut tape, &bound, &self.structure(graph), x)?;
        let logits = self.classify_on_tape(&mut tape, &bound, emb)?;
        Ok((
            tape.value(emb).data().to_vec(),
            tape.value(logits).data().to_vec(),
        ))
    }

    pub fn encode(&self, graph: &Graph) -> Result<Embedding, ModelError> {
        Ok(self.forward(graph)?.0)
    }

    /// Applies the final linear classifier to an embedding.
    pub fn classify(&self, embedding: &[f64]) -> Result<Vec<f64>, ModelError> {
        let w = self.classifier_weight.value();
        if embedding.len() != w.rows() {
            return Err(ModelError::FeatureDim {
                expected: w.rows(),
                found: embedding.len(),
            });
        }
        let e = Matrix::row_vector(embedding.to_vec());
        let mut z = e.matmul(w)?;
        for (o, b) in z.data_mut().iter_mut().zip(self.classifier_bias.value().data()) {
            *o += b;
        }
        Ok(z.into_data())
    }

    /// Attention coefficients `(src, dst, alpha)` of one GAT layer.
    pub fn attention(
        &self,
        graph: &Graph,
        layer: usize,
    ) -> Result<Vec<(usize, usize, f64)>, ModelError> {
        self.check_graph(graph)?;
        let GraphStructure::Gat { src, dst } = self.structure(graph) else {
            return Err(ModelError::Architecture("attention requires a GAT model".into()));
        };
        if layer >= self.layers.len() {
            return Err(ModelError::Architecture(format!("no layer {layer}")));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let mut h = tape.constant(graph.features().clone());
        let n = graph.num_nodes();
        for (i, l) in bound.layers.iter().enumerate() {
            let xw = tape.matmul(h, l.weight)?;
            let (a_src, a_dst) = l.att.expect("gat layer");
            let s_src = tape.matmul(xw, a_src)?;
            let s_dst = tape.matmul(xw, a_dst)?;
            let e_src = tape.row_gather(s_src, &src)?;
            let e_dst = tape.row_gather(s_dst, &dst)?;
            let scores = tape.add(e_src, e_dst)?;
            let scores = tape.leaky_relu(scores, ATTENTION_SLOPE);
            let alpha = tape.segment_softmax(scores, &dst, n)?;
            if i == layer {
                let a = tape.value(alpha).data();
                return Ok(src.iter().zip(&dst).zip(a).map(|((&s, &d), &w)| (s, d, w)).collect());
            }
            let messages = tape.row_gather(xw, &src)?;
            let weighted = tape.mul_col(messages, alpha)?;
            let agg = tape.row_scatter_add(weighted, &dst, n)?;
            let biased = tape.add_row(agg, l.bias)?;
            h = tape.leaky_relu(biased, EMBED_SLOPE);
        }
        unreachable!("layer index checked")
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new("gnn");
        r.meta.push(("model".into(), self.arch.kind.as_str().into()));
        r.meta.push(("in_dim".into(), self.arch.in_dim.to_string()));
        let hidden: Vec<String> = self.arch.hidden.iter().map(ToString::to_string).collect();
        r.meta.push(("hidden".into(), hidden.join(",")));
        r.meta.push(("classes".into(), self.arch.num_classes.to_string()));
        for (name, t) in self.tensor_names().into_iter().zip(self.tensors()) {
            r.tensors.push((name, t.value().clone()));
        }
        r
    }

    pub fn from_record(mut record: Record) -> Result<Self, ModelError> {
        record.expect_kind("gnn")?;
        let kind: ModelKind = record
            .meta("model")?
            .parse()
            .map_err(ModelError::Architecture)?;
        let arch = Architecture::new(
            kind,
            record.meta_usize("in_dim")?,
            record.meta_list("hidden")?,
            record.meta_usize("classes")?,
        );
        arch.validate()?;
        // The weight matrices alone need this many values; checking before
        // building the template keeps allocation bounded by the input.
        let mut widths = vec![arch.in_dim];
        widths.extend(&arch.hidden);
        widths.push(arch.num_classes);
        let needed = widths
            .windows(2)
            .fold(0usize, |acc, w| acc.saturating_add(w[0].saturating_mul(w[1])));
        let stored: usize = record.tensors.iter().map(|(_, m)| m.len()).sum();
        if stored < needed {
            return Err(ModelError::Architecture(format!(
                "record holds {stored} values, architecture needs at least {needed}"
            )));
        }
        // Shape template; values are overwritten below.
        let mut rng = crate::rng::stream(0, "template", &[]);
        let mut params = Self::new(arch, &mut rng)?;
        let names = params.tensor_names();
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            let m = record.take_tensor(name, t.shape())?;
            *t.value_mut() = m;
        }
        if let Some((extra, _)) = record.tensors.first() {
            return Err(ModelError::Architecture(format!("unexpected tensor {extra:?}")));
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::rng::stream;

    fn ring(n: usize, d: usize, seed: u64) -> Graph {
        let mut rng = stream(seed, "ring", &[]);
        let x = Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let edges = (0..n).map(|i| Edge::new(i, (i + 1) % n)).collect();
        Graph::new(n, edges, false, x, 0).unwrap()
    }

    fn permuted(g: &Graph, perm: &[usize]) -> Graph {
        // node i of g becomes node perm[i]
        let n = g.num_nodes();
        let mut x = Matrix::zeros(n, g.feature_dim());
        for i in 0..n {
            x.row_mut(perm[i]).copy_from_slice(g.features().row(i));
        }
        let edges = g.edges().iter().map(|e| Edge::new(perm[e.u], perm[e.v])).collect();
        Graph::new(n, edges, false, x, g.label()).unwrap()
    }

    #[test]
    fn isolated_node_identity_gcn() {
        let arch = Architecture::new(ModelKind::Gcn, 3, vec![3], 2);
        let mut p = GnnParams::new(arch, &mut stream(0, "t", &[])).unwrap();
        *p.layers[0].weight.value_mut() = Matrix::identity(3);
        let x = Matrix::row_vector(vec![0.5, -2.0, 1.0]);
        let g = Graph::new(1, vec![], false, x, 0).unwrap();
        let emb = p.encode(&g).unwrap();
        assert_eq!(emb, vec![0.5, -2.0 * EMBED_SLOPE, 1.0]);
    }

    #[test]
    fn permutation_invariance() {
        for kind in [ModelKind::Gcn, ModelKind::Gat] {
            let p = GnnParams::new(
                Architecture::new(kind, 4, vec![8, 8], 3),
                &mut stream(1, "t", &[]),
            )
            .unwrap();
            let g = ring(7, 4, 3);
            let h = permuted(&g, &[3, 0, 6, 1, 5, 2, 4]);
            let (ea, la) = p.forward(&g).unwrap();
            let (eb, lb) = p.forward(&h).unwrap();
            for (a, b) in la.iter().zip(&lb).chain(ea.iter().zip(&eb)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn encode_then_classify_matches_forward() {
        let p = GnnParams::new(
            Architecture::new(ModelKind::Gat, 4, vec![16, 16], 2),
            &mut stream(2, "t", &[]),
        )
        .unwrap();
        let g = ring(6, 4, 9);
        let (emb, logits) = p.forward(&g).unwrap();
        assert_eq!(emb.len(), 16);
        assert_eq!(p.encode(&g).unwrap(), emb);
        let again = p.classify(&emb).unwrap();
        for (a, b) in again.iter().zip(&logits) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_dim_mismatch() {
        let p = GnnParams::new(
            Architecture::new(ModelKind::Gcn, 5, vec![4], 2),
            &mut stream(0, "t", &[]),
        )
        .unwrap();
        assert!(matches!(
            p.forward(&ring(4, 3, 0)),
            Err(ModelError::FeatureDim { expected: 5, found: 3 })
        ));
    }

    #[test]
    fn attention_sums_to_one_per_target() {
        let p = GnnParams::new(
            Architecture::new(ModelKind::Gat, 3, vec![5, 5], 2),
            &mut stream(5, "t", &[]),
        )
        .unwrap();
        for seed in 0..10 {
            let g = ring(6 + seed as usize, 3, seed);
            for layer in 0..2 {
                let att = p.attention(&g, layer).unwrap();
                let mut sums = vec![0.0; g.num_nodes()];
                for (_, d, a) in att {
                    sums[d] += a;
                }
                assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        for kind in [ModelKind::Gcn, ModelKind::Gat] {
            let p = GnnParams::new(
                Architecture::new(kind, 4, vec![6, 3], 2),
                &mut stream(8, "t", &[]),
            )
            .unwrap();
            let text = p.to_record().encode();
            let back = GnnParams::from_record(Record::decode(&text).unwrap()).unwrap();
            assert_eq!(back.digest(), p.digest());
            assert_eq!(back, p);
        }
    }

    #[test]
    fn oversized_architecture_is_rejected_before_allocation() {
        let text = "fedshift-checkpoint 1\nkind gnn\nmeta model gcn\nmeta in_dim 4\nmeta hidden 3\nmeta classes 287363364282\nend\n";
        let err = GnnParams::from_record(Record::decode(text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("needs at least"), "{err}");
    }

    #[test]
    fn flat_round_trip() {
        let p = GnnParams::new(
            Architecture::new(ModelKind::Gat, 4, vec![6], 2),
            &mut stream(8, "t", &[]),
        )
        .unwrap();
        let flat = p.flatten();
        assert_eq!(flat.len(), p.num_params());
        assert_eq!(p.with_flat(&flat).unwrap(), p);
        assert!(p.with_flat(&flat[1..]).is_err());
    }
}
