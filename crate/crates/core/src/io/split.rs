use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Partition of scene identifiers into train, validation and test sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit<I> {
    pub train: Vec<I>,
    pub val: Vec<I>,
    pub test: Vec<I>,
}

impl<I: Clone> DatasetSplit<I> {
    /// Shuffles `items` with `seed` and cuts it by the given fractions; the test
    /// set takes the remainder.
    pub fn shuffled(items: &[I], train_fraction: f64, val_fraction: f64, seed: u64) -> Result<Self> {
        if train_fraction < 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0 {
            return Err(Error::Argument(format!(
                "split fractions {train_fraction} + {val_fraction} must be non-negative and sum to ≤ 1"
            )));
        }
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = items.len();
        let n_train = (train_fraction * n as f64).round() as usize;
        let n_val = ((val_fraction * n as f64).round() as usize).min(n - n_train);
        let pick = |r: std::ops::Range<usize>| r.map(|k| items[order[k]].clone()).collect();
        Ok(Self {
            train: pick(0..n_train),
            val: pick(n_train..n_train + n_val),
            test: pick(n_train + n_val..n),
        })
    }
}
