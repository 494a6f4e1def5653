use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How rows are partitioned into train / validation / test.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitStrategy {
    /// Random partition with the given ratios (must sum to 1).
    RandomRatio { train: f64, val: f64, test: f64 },
    /// The first `train_days` distinct days train; the remaining rows are cut
    /// in half, first half validation, second half test. With `shuffle_tail`
    /// the tail is shuffled before halving.
    Sequential {
        train_days: usize,
        shuffle_tail: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub strategy: SplitStrategy,
    pub seed: u64,
}

/// Row indices of each partition, each list in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

impl DatasetSplit {
    pub fn random(train: f64, val: f64, test: f64, seed: u64) -> Self {
        DatasetSplit {
            strategy: SplitStrategy::RandomRatio { train, val, test },
            seed,
        }
    }

    pub fn sequential(train_days: usize, shuffle_tail: bool, seed: u64) -> Self {
        DatasetSplit {
            strategy: SplitStrategy::Sequential {
                train_days,
                shuffle_tail,
            },
            seed,
        }
    }

    /// Partitions `n` rows. `days` is required for the sequential strategy.
    pub fn apply(&self, n: usize, days: Option<&[i64]>) -> Result<SplitIndices> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (mut train, mut val, mut test) = match &self.strategy {
            SplitStrategy::RandomRatio { train, val, test } => {
                let ratios = [*train, *val, *test];
                if ratios.iter().any(|r| !(0.0..=1.0).contains(r))
                    || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::invalid(format!(
                        "split ratios {ratios:?} must lie in [0, 1] and sum to 1"
                    )));
                }
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                let n_train = ((n as f64) * train).round() as usize;
                let n_val = (((n as f64) * val).round() as usize).min(n - n_train.min(n));
                let n_train = n_train.min(n);
                let test = order.split_off(n_train + n_val);
                let val = order.split_off(n_train);
                (order, val, test)
            }
            SplitStrategy::Sequential {
                train_days,
                shuffle_tail,
            } => {
                let days =
                    days.ok_or_else(|| Error::invalid("sequential split needs a day column"))?;
                if days.len() != n {
                    return Err(Error::invalid("day column length differs from row count"));
                }
                let mut by_day: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
                for (i, &d) in days.iter().enumerate() {
                    by_day.entry(d).or_default().push(i);
                }
                if *train_days >= by_day.len() {
                    return Err(Error::invalid(format!(
                        "{train_days} training days leave no tail out of {} days",
                        by_day.len()
                    )));
                }
                let mut train = Vec::new();
                let mut tail = Vec::new();
                for (k, rows) in by_day.into_values().enumerate() {
                    if k < *train_days {
                        train.extend(rows);
                    } else {
                        tail.extend(rows);
                    }
                }
                if *shuffle_tail {
                    tail.shuffle(&mut rng);
                }
                let test = tail.split_off(tail.len() / 2);
                (train, tail, test)
            }
        };
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(SplitIndices { train, val, test })
    }
}

/// Assigns rows `0..n` to `k` folds of near-equal size after a seeded shuffle.
pub fn k_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 partitions, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, r) in order.into_iter().enumerate() {
        folds[i % k].push(r);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_ratio_sizes() {
        let s = DatasetSplit::random(0.8, 0.1, 0.1, 3)
            .apply(10, None)
            .unwrap();
        assert_eq!(s.sizes(), (8, 1, 1));
        assert_eq!(
            s,
            DatasetSplit::random(0.8, 0.1, 0.1, 3)
                .apply(10, None)
                .unwrap()
        );
        assert!(DatasetSplit::random(0.8, 0.3, 0.1, 3)
            .apply(10, None)
            .is_err());
    }

    #[test]
    fn sequential_halves_last_day() {
        let mut days = Vec::new();
        for d in 0..8 {
            days.extend(std::iter::repeat_n(d as i64, 10 + d * 3));
        }
        let last_day_rows = 10 + 7 * 3;
        let s = DatasetSplit::sequential(7, false, 0)
            .apply(days.len(), Some(&days))
            .unwrap();
        assert_eq!(s.train.len(), days.len() - last_day_rows);
        assert!(s.val.len().abs_diff(last_day_rows / 2) <= 1);
        assert!(s.test.len().abs_diff(last_day_rows / 2) <= 1);
        assert!(s.val.iter().max() < s.test.iter().min());
        assert!(DatasetSplit::sequential(7, false, 0)
            .apply(days.len(), None)
            .is_err());
        assert!(DatasetSplit::sequential(8, false, 0)
            .apply(days.len(), Some(&days))
            .is_err());
    }

    #[test]
    fn folds_need_two() {
        assert!(k_folds(10, 1, 0).is_err());
        let f = k_folds(10, 3, 0).unwrap();
        assert_eq!(f.iter().map(Vec::len).sum::<usize>(), 10);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_exhaustive_and_deterministic(n in 0usize..300, seed in any::<u64>(), days_n in 2usize..6, shuffle in any::<bool>()) {
            let strategies = [
                DatasetSplit::random(0.8, 0.1, 0.1, seed),
                DatasetSplit::random(0.5, 0.25, 0.25, seed),
                DatasetSplit::sequential(days_n - 1, shuffle, seed),
            ];
            let days: Vec<i64> = (0..n).map(|i| (i * days_n / n.max(1)) as i64).collect();
            for s in strategies {
                let Ok(parts) = s.apply(n, Some(&days)) else { continue };
                let mut all: Vec<usize> = parts.train.iter().chain(&parts.val).chain(&parts.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(&parts, &s.apply(n, Some(&days)).unwrap());
            }
        }
    }
}
