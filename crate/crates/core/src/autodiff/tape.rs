use super::{AutodiffError, Matrix, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    RowGather(Var, Vec<usize>),
    RowScatterAdd(Var, Vec<usize>),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    CosineRows(Var, Var),
    Clamp(Var, Matrix, Matrix),
    CrossEntropy(Var, usize, Matrix),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Linear record of primitive operations.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it
/// and a single reverse sweep visits each node once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of `var` (if any) into `tensor`.
    pub fn accumulate_into(&self, var: Var, tensor: &mut Tensor) {
        if let Some(g) = self.get(var) {
            tensor.accumulate_grad(g);
        }
    }
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<(), AutodiffError> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    /// Records a parameter tensor as a leaf, honouring its `requires_grad` flag.
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        self.leaf(tensor.value().clone(), tensor.requires_grad())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        check_same("add", x, y)?;
        let mut out = x.clone();
        out.add_assign(y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// `a` (n x c) plus the row vector `row` (1 x c) on every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_row",
                left: x.shape(),
                right: r.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        check_same("sub", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Matrix::new(x.rows(), x.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        check_same("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Matrix::new(x.rows(), x.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Scales every row `i` of `a` (n x c) by `col[i]` (n x 1).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, AutodiffError> {
        let (x, s) = (self.value(a), self.value(col));
        if s.cols() != 1 || s.rows() != x.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mul_col",
                left: x.shape(),
                right: s.shape(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            let f = s.data()[i];
            for o in out.row_mut(i) {
                *o *= f;
            }
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// Selects rows of `a` in the order given by `indices` (repeats allowed).
    pub fn row_gather(&mut self, a: Var, indices: &[usize]) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * x.cols());
        for &i in indices {
            if i >= x.rows() {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "row_gather",
                    index: i,
                    bound: x.rows(),
                });
            }
            data.extend_from_slice(x.row(i));
        }
        let out = Matrix::new(indices.len(), x.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::RowGather(a, indices.to_vec()), rg))
    }

    /// Adds row `k` of `a` into row `indices[k]` of a zero `rows x cols` matrix.
    pub fn row_scatter_add(
        &mut self,
        a: Var,
        indices: &[usize],
        rows: usize,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if indices.len() != x.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "row_scatter_add",
                left: x.shape(),
                right: (indices.len(), 1),
            });
        }
        let mut out = Matrix::zeros(rows, x.cols());
        for (k, &i) in indices.iter().enumerate() {
            if i >= rows {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "row_scatter_add",
                    index: i,
                    bound: rows,
                });
            }
            for (o, v) in out.row_mut(i).iter_mut().zip(x.row(k)) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::RowScatterAdd(a, indices.to_vec()), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    /// `max(0, x)`.
    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            softmax_row(x.row(i), out.row_mut(i));
        }
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Softmax of a column vector within groups: entries sharing a segment id
    /// are normalised together.
    pub fn segment_softmax(
        &mut self,
        a: Var,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if x.cols() != 1 || x.rows() != segments.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "segment_softmax",
                left: x.shape(),
                right: (segments.len(), 1),
            });
        }
        let mut max = vec![f64::NEG_INFINITY; num_segments];
        for (&s, &v) in segments.iter().zip(x.data()) {
            if s >= num_segments {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "segment_softmax",
                    index: s,
                    bound: num_segments,
                });
            }
            max[s] = max[s].max(v);
        }
        let mut total = vec![0.0; num_segments];
        let mut data: Vec<f64> = segments
            .iter()
            .zip(x.data())
            .map(|(&s, &v)| {
                let e = (v - max[s]).exp();
                total[s] += e;
                e
            })
            .collect();
        for (d, &s) in data.iter_mut().zip(segments) {
            *d /= total[s];
        }
        let out = Matrix::column_vector(data);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SegmentSoftmax(a, segments.to_vec()), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(AutodiffError::Empty { op: "mean" });
        }
        let out = Matrix::scalar(x.data().iter().sum::<f64>() / x.len() as f64);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Mean(a), rg))
    }

    /// Column means: (n x c) -> (1 x c).
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(AutodiffError::Empty { op: "mean_rows" });
        }
        let mut out = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        let n = x.rows() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let rg = self.rg(a);
        Ok(self.push(Matrix::row_vector(out), Op::MeanRows(a), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let Some(first) = parts.first() else {
            return Err(AutodiffError::Empty { op: "concat_cols" });
        };
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.value(*first).shape(),
                    right: v.shape(),
                });
            }
            cols += v.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let v = self.value(p);
                out.row_mut(i)[offset..offset + v.cols()].copy_from_slice(v.row(i));
                offset += v.cols();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Cosine similarity of matching rows: (n x d), (n x d) -> (n x 1).
    /// A zero-norm row yields similarity 0 with zero gradient.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        check_same("cosine_rows", x, y)?;
        let data = (0..x.rows())
            .map(|i| cosine(x.row(i), y.row(i)))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Matrix::column_vector(data), Op::CosineRows(a, b), rg))
    }

    /// Elementwise clamp to `[lo, hi]`. Gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: Matrix, hi: Matrix) -> Result<Var, AutodiffError> {
        let x = self.value(a);
        check_same("clamp", x, &lo)?;
        check_same("clamp", x, &hi)?;
        let data = x
            .data()
            .iter()
            .zip(lo.data().iter().zip(hi.data()))
            .map(|(&v, (&l, &h))| v.max(l).min(h))
            .collect();
        let out = Matrix::new(x.rows(), x.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Clamp(a, lo, hi), rg))
    }

    /// Cross-entropy of a single logit row against `label`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var, AutodiffError> {
        let z = self.value(logits);
        if z.rows() != 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy",
                left: z.shape(),
                right: (1, z.cols()),
            });
        }
        if label >= z.cols() {
            return Err(AutodiffError::IndexOutOfRange {
                op: "cross_entropy",
                index: label,
                bound: z.cols(),
            });
        }
        let max = z.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z.data()[label];
        let mut probs = Matrix::zeros(1, z.cols());
        softmax_row(z.data(), probs.data_mut());
        let rg = self.rg(logits);
        Ok(self.push(
            Matrix::scalar(loss),
            Op::CrossEntropy(logits, label, probs),
            rg,
        ))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, AutodiffError> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(AutodiffError::NotScalar { shape: out.shape() });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut send = |v: Var, delta: Matrix| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&delta),
                slot => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    send(*a, g.matmul_unchecked(&self.value(*b).transpose()));
                }
                if self.rg(*b) {
                    send(*b, self.value(*a).transpose().matmul_unchecked(g));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                if self.rg(*row) {
                    let mut acc = vec![0.0; g.cols()];
                    for i in 0..g.rows() {
                        for (s, v) in acc.iter_mut().zip(g.row(i)) {
                            *s += v;
                        }
                    }
                    send(*row, Matrix::row_vector(acc));
                }
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    send(*a, zip_map(g, y, |p, q| p * q));
                }
                if self.rg(*b) {
                    send(*b, zip_map(g, x, |p, q| p * q));
                }
            }
            Op::MulCol(a, col) => {
                let (x, s) = (self.value(*a), self.value(*col));
                if self.rg(*a) {
                    let mut d = g.clone();
                    for i in 0..d.rows() {
                        let f = s.data()[i];
                        d.row_mut(i).iter_mut().for_each(|v| *v *= f);
                    }
                    send(*a, d);
                }
                if self.rg(*col) {
                    let d = (0..x.rows())
                        .map(|i| g.row(i).iter().zip(x.row(i)).map(|(p, q)| p * q).sum())
                        .collect();
                    send(*col, Matrix::column_vector(d));
                }
            }
            Op::Scale(a, f) => send(*a, g.map(|x| x * f)),
            Op::RowGather(a, idx) => {
                let x = self.value(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                send(*a, d);
            }
            Op::RowScatterAdd(a, idx) => {
                let cols = g.cols();
                let mut d = Matrix::zeros(idx.len(), cols);
                for (k, &i) in idx.iter().enumerate() {
                    d.row_mut(k).copy_from_slice(g.row(i));
                }
                send(*a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                send(*a, zip_map(g, x, |d, v| if v > 0.0 { d } else { slope * d }));
            }
            Op::Exp(a) => send(*a, zip_map(g, &node.value, |d, y| d * y)),
            Op::Log(a) => send(*a, zip_map(g, self.value(*a), |d, x| d / x)),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(p, q)| p * q).sum();
                    for ((o, gv), yv) in d.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *o = yv * (gv - dot);
                    }
                }
                send(*a, d);
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = node.value.data();
                let num = segments.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; num];
                for ((&s, gv), yv) in segments.iter().zip(g.data()).zip(y) {
                    dot[s] += gv * yv;
                }
                let d = segments
                    .iter()
                    .zip(g.data().iter().zip(y))
                    .map(|(&s, (gv, yv))| yv * (gv - dot[s]))
                    .collect();
                send(*a, Matrix::column_vector(d));
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                send(*a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                send(*a, Matrix::filled(x.rows(), x.cols(), g.item() / x.len() as f64));
            }
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let n = x.rows() as f64;
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    for (o, gv) in d.row_mut(i).iter_mut().zip(g.data()) {
                        *o = gv / n;
                    }
                }
                send(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.rg(p) {
                        let mut d = Matrix::zeros(g.rows(), c);
                        for i in 0..g.rows() {
                            d.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + c]);
                        }
                        send(p, d);
                    }
                    offset += c;
                }
            }
            Op::CosineRows(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let mut da = Matrix::zeros(x.rows(), x.cols());
                let mut db = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let (u, v) = (x.row(i), y.row(i));
                    let (nu, nv) = (norm(u), norm(v));
                    if nu == 0.0 || nv == 0.0 {
                        continue;
                    }
                    let c = node.value.data()[i];
                    let gi = g.data()[i];
                    for k in 0..u.len() {
                        da.row_mut(i)[k] = gi * (v[k] / (nu * nv) - c * u[k] / (nu * nu));
                        db.row_mut(i)[k] = gi * (u[k] / (nu * nv) - c * v[k] / (nv * nv));
                    }
                }
                send(*a, da);
                send(*b, db);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(lo.data().iter().zip(hi.data()))
                    .map(|((gv, &v), (&l, &h))| if v >= l && v <= h { *gv } else { 0.0 })
                    .collect();
                send(*a, Matrix::new(x.rows(), x.cols(), d).expect("clamp shape"));
            }
            Op::CrossEntropy(logits, label, probs) => {
                let mut d = probs.clone();
                d.data_mut()[*label] -= 1.0;
                let scale = g.item();
                d.data_mut().iter_mut().for_each(|v| *v *= scale);
                send(*logits, d);
            }
        }
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Matrix::new(a.rows(), a.cols(), data).expect("zip_map shape")
}

/// Cosine similarity, 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() / (nu * nv)
}
