use super::ensure;
use fedshift::autodiff::{Matrix, Tape, Var};
use fedshift::gnn::{Architecture, GnnParams, ModelKind};
use fedshift::graph::{Edge, Graph};
use fedshift::rng::stream;
use rand::Rng;

const H: f64 = 1e-5;

pub type Build = dyn Fn(&mut Tape, &[Var]) -> Var;
type Inputs = Box<dyn Fn(&mut rand_chacha::ChaCha8Rng) -> Vec<Matrix>>;

fn random(rows: usize, cols: usize, rng: &mut impl Rng, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Scalar loss: the op's output weighted by a fixed random matrix and summed.
fn loss(build: &Build, inputs: &[Matrix], weights: &mut Option<Matrix>, seed: u64) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone(), true)).collect();
    let out = build(&mut tape, &vars);
    let (r, c) = tape.value(out).shape();
    let w = weights.get_or_insert_with(|| random(r, c, &mut stream(seed, "weights", &[]), -1.0, 1.0));
    let wv = tape.constant(w.clone());
    let prod = tape.mul(out, wv).unwrap();
    let total = tape.sum(prod);
    let grads = tape.backward(total).unwrap();
    let g = vars
        .iter()
        .zip(inputs)
        .map(|(&v, m)| grads.get(v).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();
    (tape.value(total).item(), g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest relative error between the analytic and central-difference
/// gradients over all inputs.
fn rel_error(build: &Build, inputs: Vec<Matrix>, seed: u64) -> f64 {
    let mut weights = None;
    let (_, analytic) = loss(build, &inputs, &mut weights, seed);
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= H;
            let (fp, _) = loss(build, &plus, &mut weights, seed);
            let (fm, _) = loss(build, &minus, &mut weights, seed);
            *slot = (fp - fm) / (2.0 * H);
        }
        let a = analytic[k].data();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let scale = norm(a).max(norm(&numeric)).max(1e-8);
        worst = worst.max(norm(&diff) / scale);
    }
    worst
}

fn primitives() -> Vec<(&'static str, Box<Build>, Inputs)> {
    fn two(r: usize, c: usize) -> Inputs {
        Box::new(move |rng| vec![random(r, c, rng, -2.0, 2.0), random(r, c, rng, -2.0, 2.0)])
    }
    fn one(r: usize, c: usize, lo: f64, hi: f64) -> Inputs {
        Box::new(move |rng| vec![random(r, c, rng, lo, hi)])
    }
    vec![
        ("matmul", Box::new(|t: &mut Tape, v: &[Var]| t.matmul(v[0], v[1]).unwrap()),
            Box::new(|rng: &mut rand_chacha::ChaCha8Rng| vec![random(4, 3, rng, -2.0, 2.0), random(3, 4, rng, -2.0, 2.0)])),
        ("add", Box::new(|t: &mut Tape, v: &[Var]| t.add(v[0], v[1]).unwrap()), two(4, 4)),
        ("sub", Box::new(|t: &mut Tape, v: &[Var]| t.sub(v[0], v[1]).unwrap()), two(4, 4)),
        ("mul", Box::new(|t: &mut Tape, v: &[Var]| t.mul(v[0], v[1]).unwrap()), two(4, 4)),
        ("add_row", Box::new(|t: &mut Tape, v: &[Var]| t.add_row(v[0], v[1]).unwrap()),
            Box::new(|rng: &mut rand_chacha::ChaCha8Rng| vec![random(4, 4, rng, -2.0, 2.0), random(1, 4, rng, -2.0, 2.0)])),
        ("mul_col", Box::new(|t: &mut Tape, v: &[Var]| t.mul_col(v[0], v[1]).unwrap()),
            Box::new(|rng: &mut rand_chacha::ChaCha8Rng| vec![random(4, 4, rng, -2.0, 2.0), random(4, 1, rng, -2.0, 2.0)])),
        ("scale", Box::new(|t: &mut Tape, v: &[Var]| t.scale(v[0], -1.7)), one(4, 4, -2.0, 2.0)),
        ("row_gather", Box::new(|t: &mut Tape, v: &[Var]| t.row_gather(v[0], &[0, 2, 2, 3, 1]).unwrap()), one(4, 4, -2.0, 2.0)),
        ("row_scatter_add", Box::new(|t: &mut Tape, v: &[Var]| t.row_scatter_add(v[0], &[3, 0, 3, 1, 0], 4).unwrap()), one(5, 4, -2.0, 2.0)),
        ("leaky_relu", Box::new(|t: &mut Tape, v: &[Var]| t.leaky_relu(v[0], 0.2)), one(4, 4, -2.0, 2.0)),
        ("relu", Box::new(|t: &mut Tape, v: &[Var]| t.relu(v[0])), one(4, 4, -2.0, 2.0)),
        ("exp", Box::new(|t: &mut Tape, v: &[Var]| t.exp(v[0])), one(4, 4, -2.0, 2.0)),
        ("log", Box::new(|t: &mut Tape, v: &[Var]| t.log(v[0])), one(4, 4, 0.2, 3.0)),
        ("softmax_rows", Box::new(|t: &mut Tape, v: &[Var]| t.softmax_rows(v[0])), one(4, 4, -3.0, 3.0)),
        ("segment_softmax", Box::new(|t: &mut Tape, v: &[Var]| t.segment_softmax(v[0], &[0, 0, 1, 1, 1, 2], 3).unwrap()), one(6, 1, -3.0, 3.0)),
        ("sum", Box::new(|t: &mut Tape, v: &[Var]| t.sum(v[0])), one(4, 4, -2.0, 2.0)),
        ("mean", Box::new(|t: &mut Tape, v: &[Var]| t.mean(v[0]).unwrap()), one(4, 4, -2.0, 2.0)),
        ("mean_rows", Box::new(|t: &mut Tape, v: &[Var]| t.mean_rows(v[0]).unwrap()), one(4, 4, -2.0, 2.0)),
        ("concat_cols", Box::new(|t: &mut Tape, v: &[Var]| t.concat_cols(&[v[0], v[1]]).unwrap()),
            Box::new(|rng: &mut rand_chacha::ChaCha8Rng| vec![random(4, 2, rng, -2.0, 2.0), random(4, 3, rng, -2.0, 2.0)])),
        ("cosine_rows", Box::new(|t: &mut Tape, v: &[Var]| t.cosine_rows(v[0], v[1]).unwrap()), two(4, 4)),
        ("clamp", Box::new(|t: &mut Tape, v: &[Var]| t.clamp(v[0], Matrix::filled(4, 4, -1.0), Matrix::filled(4, 4, 1.0)).unwrap()), one(4, 4, -2.0, 2.0)),
        ("cross_entropy", Box::new(|t: &mut Tape, v: &[Var]| t.cross_entropy(v[0], 2).unwrap()), one(1, 4, -3.0, 3.0)),
    ]
}

/// Worst primitive error over `seeds` draws, or the first draw above 1e-4.
pub fn check_primitives(seeds: u64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (name, build, inputs) in primitives() {
        for seed in 0..seeds {
            let x = inputs(&mut stream(seed, name, &[]));
            let err = rel_error(build.as_ref(), x, seed);
            ensure(err < 1e-4, || format!("{name} seed {seed}: relative error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn five_node_graph(seed: u64) -> Graph {
    let mut rng = stream(seed, "graph", &[]);
    let edges = vec![Edge::new(0, 1), Edge::new(1, 2), Edge::new(2, 0), Edge::new(2, 3), Edge::new(3, 4)];
    Graph::new(5, edges, false, random(5, 3, &mut rng, -1.0, 1.0), (seed % 2) as usize).unwrap()
}

/// Relative error for one parameter draw, or `None` when a kink of the
/// piecewise-linear activations lies within one step of the draw (the
/// one-sided differences disagree and central differences are not a valid
/// reference there).
fn end_to_end_error(kind: ModelKind, seed: u64, attempt: u64) -> Option<f64> {
    let graph = five_node_graph(seed);
    let params = GnnParams::new(Architecture::new(kind, 3, vec![4, 4], 2), &mut stream(seed, "init", &[attempt])).unwrap();
    let flat = params.flatten();
    let eval = |flat: &[f64]| -> (f64, Vec<f64>) {
        let p = params.with_flat(flat).unwrap();
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape, true);
        let x = tape.constant(graph.features().clone());
        let emb = p.embed_on_tape(&mut tape, &bound, &p.structure(&graph), x).unwrap();
        let logits = p.classify_on_tape(&mut tape, &bound, emb).unwrap();
        let l = tape.cross_entropy(logits, graph.label()).unwrap();
        let grads = tape.backward(l).unwrap();
        let mut g = Vec::new();
        for (v, t) in bound.vars().into_iter().zip(p.tensors()) {
            match grads.get(v) {
                Some(m) => g.extend_from_slice(m.data()),
                None => g.extend(std::iter::repeat_n(0.0, t.value().len())),
            }
        }
        (tape.value(l).item(), g)
    };
    let (f0, analytic) = eval(&flat);
    let mut numeric = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += H;
        let mut minus = flat.clone();
        minus[i] -= H;
        let (fp, fm) = (eval(&plus).0, eval(&minus).0);
        let (fwd, bwd) = ((fp - f0) / H, (f0 - fm) / H);
        if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-2) {
            return None;
        }
        numeric.push((fp - fm) / (2.0 * H));
    }
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    Some(norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-8))
}

pub fn first_smooth_error(kind: ModelKind, seed: u64) -> f64 {
    (0..10)
        .find_map(|attempt| end_to_end_error(kind, seed, attempt))
        .expect("a smooth parameter draw within 10 attempts")
}

/// Worst end-to-end loss-gradient error over `seeds` draws.
pub fn check_end_to_end(kind: ModelKind, seeds: u64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let err = first_smooth_error(kind, seed);
        ensure(err < 1e-3, || format!("{} seed {seed}: relative error {err:e}", kind.as_str()))?;
        worst = worst.max(err);
    }
    Ok(worst)
}
