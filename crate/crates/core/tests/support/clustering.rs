use super::ensure;
use fedshift::autodiff::Matrix;
use fedshift::graph::{clustering_coefficients, CoefficientKind, Edge, Graph};
use fedshift::rng::stream;
use rand::Rng;

/// Diagonal of the dense cube `A^3`.
fn cube_diag(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut sq = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                sq[i][j] += a[i][k] * a[k][j];
            }
        }
    }
    (0..n)
        .map(|u| (0..n).map(|k| sq[u][k] * a[k][u]).sum())
        .collect()
}

fn random_edges(seed: u64, directed: bool, weighted: bool) -> (usize, Vec<Edge>) {
    let mut rng = stream(seed, "clustering-oracle", &[u64::from(directed), u64::from(weighted)]);
    let n = rng.random_range(1..=30);
    let density = rng.random_range(0.05..0.6);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v || (!directed && v < u) {
                continue;
            }
            if rng.random_bool(density) {
                let w = if weighted { rng.random_range(0.1..5.0) } else { 1.0 };
                edges.push(Edge::weighted(u, v, w));
            }
        }
    }
    (n, edges)
}

fn build(n: usize, edges: Vec<Edge>, directed: bool) -> Graph {
    Graph::new(n, edges, directed, Matrix::zeros(n, 1), 0).unwrap()
}

fn degree(a: &[Vec<f64>], u: usize) -> usize {
    a[u].iter().filter(|&&x| x > 0.0).count()
}

/// Triangle count from the trace of the adjacency cube.
fn unweighted_oracle(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut a = vec![vec![0.0; n]; n];
    for e in edges {
        a[e.u][e.v] = 1.0;
        a[e.v][e.u] = 1.0;
    }
    let t = cube_diag(&a);
    (0..n)
        .map(|u| {
            let d = degree(&a, u);
            if d < 2 {
                0.0
            } else {
                t[u] / (d * (d - 1)) as f64
            }
        })
        .collect()
}

/// Cube roots of max-normalised weights, summed around every closed walk of
/// length 3 through `u`.
fn weighted_oracle(n: usize, edges: &[Edge]) -> Vec<f64> {
    let max = edges.iter().map(|e| e.weight).fold(0.0_f64, f64::max);
    let mut a = vec![vec![0.0; n]; n];
    for e in edges {
        let w = (e.weight / max).cbrt();
        a[e.u][e.v] = w;
        a[e.v][e.u] = w;
    }
    let t = cube_diag(&a);
    (0..n)
        .map(|u| {
            let d = degree(&a, u);
            if d < 2 {
                0.0
            } else {
                t[u] / (d * (d - 1)) as f64
            }
        })
        .collect()
}

/// `((A + A^T)^3)_uu / (2 (d_tot (d_tot - 1) - 2 d_recip))`.
fn directed_oracle(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut a = vec![vec![0.0; n]; n];
    for e in edges {
        a[e.u][e.v] = 1.0;
    }
    let s: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] + a[j][i]).collect()).collect();
    let t = cube_diag(&s);
    (0..n)
        .map(|u| {
            let d_out: f64 = a[u].iter().sum();
            let d_in: f64 = (0..n).map(|v| a[v][u]).sum();
            let recip: f64 = (0..n).map(|v| a[u][v] * a[v][u]).sum();
            let tot = d_in + d_out;
            let denom = tot * (tot - 1.0) - 2.0 * recip;
            if tot < 2.0 || denom <= 0.0 {
                0.0
            } else {
                t[u] / (2.0 * denom)
            }
        })
        .collect()
}

fn close(got: &[f64], want: &[f64], what: &str, seed: u64) -> Result<(), String> {
    ensure(got.len() == want.len(), || format!("{what} seed {seed}: length {} vs {}", got.len(), want.len()))?;
    for (u, (g, w)) in got.iter().zip(want).enumerate() {
        ensure((g - w).abs() < 1e-12, || format!("{what} seed {seed} node {u}: {g} vs {w}"))?;
    }
    Ok(())
}

fn kind_is(g: &Graph, kind: CoefficientKind, seed: u64) -> Result<(), String> {
    let got = CoefficientKind::for_graph(g);
    ensure(got == kind, || format!("seed {seed}: dispatched {got:?}, expected {kind:?}"))
}

pub fn check_unweighted(graphs: u64) -> Result<(), String> {
    for seed in 0..graphs {
        let (n, edges) = random_edges(seed, false, false);
        let g = build(n, edges.clone(), false);
        kind_is(&g, CoefficientKind::Unweighted, seed)?;
        close(&clustering_coefficients(&g), &unweighted_oracle(n, &edges), "unweighted", seed)?;
    }
    Ok(())
}

/// Returns how many graphs had at least one edge.
pub fn check_weighted(graphs: u64) -> Result<u64, String> {
    let mut exercised = 0;
    for seed in 0..graphs {
        let (n, edges) = random_edges(seed, false, true);
        if edges.is_empty() {
            continue;
        }
        exercised += 1;
        let g = build(n, edges.clone(), false);
        kind_is(&g, CoefficientKind::Weighted, seed)?;
        close(&clustering_coefficients(&g), &weighted_oracle(n, &edges), "weighted", seed)?;
    }
    Ok(exercised)
}

pub fn check_directed(graphs: u64) -> Result<(), String> {
    for seed in 0..graphs {
        let (n, edges) = random_edges(seed, true, false);
        let g = build(n, edges.clone(), true);
        kind_is(&g, CoefficientKind::Directed, seed)?;
        close(&clustering_coefficients(&g), &directed_oracle(n, &edges), "directed", seed)?;
    }
    Ok(())
}

pub fn check_uniform_weights(graphs: u64) -> Result<(), String> {
    for seed in 0..graphs {
        let (n, edges) = random_edges(seed, false, false);
        let heavy: Vec<Edge> = edges.iter().map(|e| Edge::weighted(e.u, e.v, 2.5)).collect();
        let g = build(n, heavy.clone(), false);
        if !heavy.is_empty() {
            kind_is(&g, CoefficientKind::Weighted, seed)?;
        }
        close(&clustering_coefficients(&g), &unweighted_oracle(n, &edges), "uniform-weight", seed)?;
        close(&weighted_oracle(n, &edges), &unweighted_oracle(n, &edges), "oracle unit-weight", seed)?;
    }
    Ok(())
}
