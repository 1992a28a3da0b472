use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint train/validation/test index sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 80/10/10 partition: ⌊0.8n⌋ train, ⌊0.1n⌋ validation, rest test.
pub fn split_dataset(n_samples: usize, seed: u64) -> Result<Split> {
    if n_samples < 10 {
        return Err(Error::Config(format!("need at least 10 samples to split, got {n_samples}")));
    }
    let mut idx: Vec<usize> = (0..n_samples).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n_samples * 8 / 10;
    let n_val = n_samples / 10;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Split { train: idx, val, test })
}
