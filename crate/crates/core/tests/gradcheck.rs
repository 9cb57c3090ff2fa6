mod support;

use fedshift::gnn::ModelKind;
use support::grad::{check_end_to_end, check_primitives};

const SEEDS: u64 = 20;

#[test]
fn every_primitive_matches_central_differences() {
    check_primitives(SEEDS).unwrap();
}

#[test]
fn gcn_loss_gradient_matches_central_differences() {
    check_end_to_end(ModelKind::Gcn, SEEDS).unwrap();
}

#[test]
fn gat_loss_gradient_matches_central_differences() {
    check_end_to_end(ModelKind::Gat, SEEDS).unwrap();
}
