use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle cut into `⌊0.6n⌋` train, `⌊0.2n⌋` validation and the
/// remainder as test nodes.
pub fn split(num_nodes: usize, seed: u64) -> Result<Split> {
    if num_nodes < 5 {
        return Err(Error::InvalidConfig(format!(
            "splitting needs at least 5 nodes, got {num_nodes}"
        )));
    }
    let mut ids: Vec<usize> = (0..num_nodes).collect();
    ids.shuffle(&mut rng(seed));
    let n_train = num_nodes * 6 / 10;
    let n_val = num_nodes * 2 / 10;
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(Split { train: ids, val, test })
}

/// All of `train_pool` for training; `holdout` shuffled and halved into
/// validation and test, the odd node going to test.
pub fn holdout_split(train_pool: &[usize], holdout: &[usize], seed: u64) -> Result<Split> {
    if train_pool.is_empty() || holdout.len() < 2 {
        return Err(Error::InvalidConfig(
            "a holdout split needs training nodes and at least 2 held-out nodes".into(),
        ));
    }
    let mut rest = holdout.to_vec();
    rest.shuffle(&mut rng(seed));
    let test = rest.split_off(rest.len() / 2);
    Ok(Split {
        train: train_pool.to_vec(),
        val: rest,
        test,
    })
}
