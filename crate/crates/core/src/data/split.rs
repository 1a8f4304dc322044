use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::SeededRng;

/// Disjoint train/validation/test row indices covering every row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    /// Shuffles `0..n_rows` with `seed`, then cuts contiguous blocks of the
    /// requested fractions (rounded; the test block takes the remainder).
    pub fn new(n_rows: usize, fractions: [f64; 3], seed: u64) -> Result<Self> {
        if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {fractions:?} must be positive and sum to 1"
            )));
        }
        let mut order: Vec<usize> = (0..n_rows).collect();
        order.shuffle(&mut SeededRng::seed_from_u64(seed));
        let n_train = (n_rows as f64 * fractions[0]).round() as usize;
        let n_val = ((n_rows as f64 * fractions[1]).round() as usize).min(n_rows - n_train.min(n_rows));
        if n_train == 0 || n_val == 0 || n_train + n_val >= n_rows {
            return Err(Error::Config(format!(
                "{n_rows} rows cannot be split into non-empty parts with fractions {fractions:?}"
            )));
        }
        let test = order.split_off(n_train + n_val);
        let validation = order.split_off(n_train);
        Ok(Self {
            train: order,
            validation,
            test,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_rows_split_eight_one_one() {
        let s = SplitIndices::new(10, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_split() {
        assert_eq!(
            SplitIndices::new(50, [0.6, 0.2, 0.2], 3).unwrap(),
            SplitIndices::new(50, [0.6, 0.2, 0.2], 3).unwrap()
        );
    }

    #[test]
    fn different_seeds_permute_differently() {
        for seed in 0..100u64 {
            let a = SplitIndices::new(100, [0.8, 0.1, 0.1], seed).unwrap();
            let b = SplitIndices::new(100, [0.8, 0.1, 0.1], seed + 1000).unwrap();
            assert_ne!(a.train, b.train, "seed pair {seed}");
        }
    }

    #[test]
    fn empty_part_is_a_configuration_error() {
        assert!(matches!(SplitIndices::new(3, [0.8, 0.1, 0.1], 0), Err(Error::Config(_))));
        assert!(matches!(SplitIndices::new(10, [1.0, 0.0, 0.0], 0), Err(Error::Config(_))));
    }
}
