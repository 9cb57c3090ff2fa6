use super::*;

fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::new(rows, cols, data.to_vec()).unwrap()
}

#[test]
fn matmul_2x3_by_3x1() {
    let mut t = Tape::new();
    let a = t.constant(m(2, 3, &[1., 2., 3., 4., 5., 6.]));
    let b = t.constant(m(3, 1, &[1., 0., -1.]));
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.value(c), &m(2, 1, &[-2., -2.]));
}

#[test]
fn matmul_shape_error_names_shapes() {
    let mut t = Tape::new();
    let a = t.constant(Matrix::zeros(2, 3));
    let b = t.constant(Matrix::zeros(2, 1));
    let err = t.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("(2, 3)") && msg.contains("(2, 1)"), "{msg}");
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut t = Tape::new();
    let a = t.constant(Matrix::filled(1, 4, 3.7));
    let s = t.softmax_rows(a);
    for &v in t.value(s).data() {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn softmax_rows_sum_to_one_even_for_large_logits() {
    let mut t = Tape::new();
    let a = t.constant(m(2, 3, &[1000., 999., -50., -3., 0.5, 2.0]));
    let s = t.softmax_rows(a);
    for r in 0..2 {
        let total: f64 = t.value(s).row(r).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_uniform_is_ln_c() {
    for c in 2..7 {
        let mut t = Tape::new();
        let z = t.constant(Matrix::filled(1, c, -1.25));
        let l = t.cross_entropy(z, 0).unwrap();
        assert!((t.value(l).item() - (c as f64).ln()).abs() < 1e-9);
    }
}

#[test]
fn cross_entropy_rejects_bad_label() {
    let mut t = Tape::new();
    let z = t.constant(Matrix::zeros(1, 2));
    assert!(matches!(
        t.cross_entropy(z, 2),
        Err(AutodiffError::IndexOutOfRange { .. })
    ));
}

#[test]
fn row_gather_selects_rows() {
    let mut t = Tape::new();
    let a = t.constant(m(3, 2, &[1., 2., 3., 4., 5., 6.]));
    let g = t.row_gather(a, &[0, 2]).unwrap();
    assert_eq!(t.value(g), &m(2, 2, &[1., 2., 5., 6.]));
    assert!(t.row_gather(a, &[3]).is_err());
}

#[test]
fn scatter_add_accumulates_duplicates() {
    let mut t = Tape::new();
    let a = t.leaf(m(3, 1, &[1., 2., 3.]), true);
    let s = t.row_scatter_add(a, &[1, 1, 0], 2).unwrap();
    assert_eq!(t.value(s), &m(2, 1, &[3., 3.]));
    let total = t.sum(s);
    let g = t.backward(total).unwrap();
    assert_eq!(g.get(a).unwrap(), &Matrix::ones(3, 1));
}

#[test]
fn gradient_of_sum_is_ones() {
    let mut t = Tape::new();
    let x = t.leaf(m(2, 3, &[0.3, -1., 2., 5., 0., 1.]), true);
    let s = t.sum(x);
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &Matrix::ones(2, 3));
}

#[test]
fn gradient_of_square_at_three_is_six() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::scalar(3.0), true);
    let y = t.mul(x, x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 6.0);
}

#[test]
fn fan_out_gradients_accumulate() {
    // y = x*x + 2x -> dy/dx = 2x + 2
    let mut t = Tape::new();
    let x = t.leaf(Matrix::scalar(1.5), true);
    let sq = t.mul(x, x).unwrap();
    let two_x = t.scale(x, 2.0);
    let y = t.add(sq, two_x).unwrap();
    let g = t.backward(y).unwrap();
    assert!((g.get(x).unwrap().item() - 5.0).abs() < 1e-15);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::zeros(2, 2), true);
    assert!(matches!(t.backward(x), Err(AutodiffError::NotScalar { .. })));
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(Matrix::scalar(2.0), true);
    let c = t.constant(Matrix::scalar(4.0));
    let y = t.mul(x, c).unwrap();
    let g = t.backward(y).unwrap();
    assert!(g.get(c).is_none());
    assert_eq!(g.get(x).unwrap().item(), 4.0);
}

#[test]
fn cosine_zero_row_has_zero_similarity_and_gradient() {
    let mut t = Tape::new();
    let a = t.leaf(m(1, 2, &[0., 0.]), true);
    let b = t.leaf(m(1, 2, &[1., 2.]), true);
    let c = t.cosine_rows(a, b).unwrap();
    assert_eq!(t.value(c).item(), 0.0);
    let s = t.sum(c);
    let g = t.backward(s).unwrap();
    assert!(g.get(a).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn clamp_blocks_gradient_outside_bounds() {
    let mut t = Tape::new();
    let x = t.leaf(m(1, 3, &[-2., 0.5, 3.]), true);
    let c = t
        .clamp(x, Matrix::filled(1, 3, -1.), Matrix::filled(1, 3, 1.))
        .unwrap();
    assert_eq!(t.value(c).data(), &[-1., 0.5, 1.]);
    let s = t.sum(c);
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0., 1., 0.]);
}

#[test]
fn segment_softmax_normalises_each_group() {
    let mut t = Tape::new();
    let x = t.constant(Matrix::column_vector(vec![1., 2., 3., -1., 0.5]));
    let s = t.segment_softmax(x, &[0, 0, 1, 1, 1], 2).unwrap();
    let v = t.value(s).data();
    assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
    assert!((v[2] + v[3] + v[4] - 1.0).abs() < 1e-12);
}

#[test]
fn sgd_step_examples() {
    let mut p = Tensor::parameter(Matrix::scalar(1.0));
    p.accumulate_grad(&Matrix::scalar(0.5));
    sgd_step(&mut [&mut p], 0.1).unwrap();
    assert!((p.value().item() - 0.95).abs() < 1e-15);
    assert!(p.grad().is_none());

    let mut q = Tensor::parameter(Matrix::scalar(-2.0));
    q.accumulate_grad(&Matrix::scalar(0.0));
    sgd_step(&mut [&mut q], 0.1).unwrap();
    assert_eq!(q.value().item(), -2.0);
}

#[test]
fn sgd_two_steps_on_square() {
    // hand iteration: x1 = 1 - 0.1*2 = 0.8, x2 = 0.8 - 0.1*1.6 = 0.64
    let mut x = Tensor::parameter(Matrix::scalar(1.0));
    for _ in 0..2 {
        let mut t = Tape::new();
        let v = t.param(&x);
        let y = t.mul(v, v).unwrap();
        let g = t.backward(y).unwrap();
        g.accumulate_into(v, &mut x);
        sgd_step(&mut [&mut x], 0.1).unwrap();
    }
    assert!((x.value().item() - 0.64).abs() < 1e-12);
}

#[test]
fn sgd_rejects_missing_gradient() {
    let mut a = Tensor::parameter(Matrix::scalar(1.0));
    let mut b = Tensor::parameter(Matrix::scalar(1.0));
    a.accumulate_grad(&Matrix::scalar(1.0));
    let err = sgd_step(&mut [&mut a, &mut b], 0.1).unwrap_err();
    assert_eq!(err, AutodiffError::MissingGradient { index: 1 });
    // nothing applied
    assert_eq!(a.value().item(), 1.0);
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut t = Tape::new();
        let x = t.leaf(m(2, 2, &[0.1, -0.7, 1.3, 0.2]), true);
        let w = t.leaf(m(2, 2, &[0.5, 0.25, -1.0, 2.0]), true);
        let h = t.matmul(x, w).unwrap();
        let a = t.leaky_relu(h, 0.01);
        let s = t.softmax_rows(a);
        let l = t.log(s);
        let out = t.mean(l).unwrap();
        let g = t.backward(out).unwrap();
        (
            t.value(out).clone(),
            g.get(x).unwrap().clone(),
            g.get(w).unwrap().clone(),
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
}
