use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::rng::{budget, stream};

/// Client shards and the held-out test set, as indices into a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub client_indices: Vec<Vec<usize>>,
    pub test_indices: Vec<usize>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }
}

/// Seeded shuffle; the first `ceil(ratio * n)` indices train.
pub fn split_train_test(
    len: usize,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), GraphError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GraphError::Invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut stream(seed, "split", &[]));
    let test = order.split_off(budget(ratio, len));
    Ok((order, test))
}

/// IID shards whose sizes differ by at most one.
pub fn partition_clients(
    train: &[usize],
    test: &[usize],
    num_clients: usize,
    seed: u64,
) -> Result<Partition, GraphError> {
    if num_clients < 2 {
        return Err(GraphError::Invalid(format!("need at least 2 clients, got {num_clients}")));
    }
    if train.len() < num_clients {
        return Err(GraphError::Invalid(format!(
            "{} training graphs cannot fill {num_clients} clients",
            train.len()
        )));
    }
    let mut order = train.to_vec();
    order.shuffle(&mut stream(seed, "partition", &[]));
    let base = order.len() / num_clients;
    let extra = order.len() % num_clients;
    let mut client_indices = Vec::with_capacity(num_clients);
    let mut rest = order.as_slice();
    for c in 0..num_clients {
        let take = base + usize::from(c < extra);
        let (head, tail) = rest.split_at(take);
        client_indices.push(head.to_vec());
        rest = tail;
    }
    Ok(Partition {
        client_indices,
        test_indices: test.to_vec(),
    })
}
