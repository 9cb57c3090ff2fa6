mod support;

use fedshift::federation::fedavg;
use support::aggregators::{check_bulyan, check_fedavg, check_foolsgold, check_krum};

#[test]
fn fedavg_is_the_elementwise_mean() {
    check_fedavg(50).unwrap();
}

#[test]
fn weighted_fedavg_matches_hand_sum() {
    let ups = vec![vec![1.0, 0.0], vec![0.0, 4.0]];
    assert_eq!(fedavg(&ups, Some(&[3.0, 1.0])).unwrap(), vec![0.75, 1.0]);
    assert!(fedavg(&ups, Some(&[0.0, 0.0])).is_err());
    assert!(fedavg(&ups, Some(&[1.0])).is_err());
}

#[test]
fn krum_never_picks_a_distant_outlier() {
    check_krum(100).unwrap();
}

#[test]
fn bulyan_stays_inside_the_honest_range() {
    check_bulyan(100).unwrap();
}

#[test]
fn foolsgold_down_weights_a_colluding_pair() {
    check_foolsgold().unwrap();
}
