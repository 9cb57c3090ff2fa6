mod support;

use support::clustering::{check_directed, check_uniform_weights, check_unweighted, check_weighted};

const GRAPHS: u64 = 100;

#[test]
fn unweighted_matches_adjacency_cube() {
    check_unweighted(GRAPHS).unwrap();
}

#[test]
fn weighted_matches_geometric_mean_oracle() {
    assert!(check_weighted(GRAPHS).unwrap() > 90);
}

#[test]
fn directed_matches_symmetrised_cube() {
    check_directed(GRAPHS).unwrap();
}

#[test]
fn uniform_weights_reduce_to_unweighted() {
    check_uniform_weights(GRAPHS).unwrap();
}
