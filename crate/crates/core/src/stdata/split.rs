use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::rng;

/// Disjoint train/val/test index lists covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    fn sizes(n: usize, fractions: [f64; 3]) -> Result<(usize, usize), DataError> {
        let total: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (total - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidConfig(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
        }
        let n_train = (fractions[0] * n as f64).floor() as usize;
        let n_val = (fractions[1] * n as f64).floor() as usize;
        if n_train == 0 {
            return Err(DataError::InvalidConfig(format!("{n} samples leave an empty training split")));
        }
        Ok((n_train, n_val))
    }

    /// Consecutive blocks in index order, so test samples follow train samples.
    pub fn contiguous(n: usize, fractions: [f64; 3]) -> Result<Self, DataError> {
        let (a, b) = Self::sizes(n, fractions)?;
        Ok(Self {
            train: (0..a).collect(),
            val: (a..a + b).collect(),
            test: (a + b..n).collect(),
        })
    }

    pub fn shuffled(n: usize, fractions: [f64; 3], seed: u64) -> Result<Self, DataError> {
        let (a, b) = Self::sizes(n, fractions)?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, rng::streams::PERMUTE));
        Ok(Self {
            train: idx[..a].to_vec(),
            val: idx[a..a + b].to_vec(),
            test: idx[a + b..].to_vec(),
        })
    }

    /// A contiguous block of `floor(portion * train.len())` training indices at a seeded offset.
    pub fn portion(&self, portion: f64, seed: u64) -> Result<Vec<usize>, DataError> {
        if !(portion > 0.0 && portion <= 1.0) {
            return Err(DataError::InvalidConfig(format!("portion {portion} outside (0, 1]")));
        }
        let n = self.train.len();
        let k = (portion * n as f64).floor() as usize;
        if k == 0 {
            return Err(DataError::InvalidConfig(format!("portion {portion} of {n} samples is empty")));
        }
        let start = rng::stream(seed, rng::streams::SUBSAMPLE).random_range(0..=n - k);
        Ok(self.train[start..start + k].to_vec())
    }
}
