use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::interactions::InteractionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, valid: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument {
                name: "ratios",
                reason: format!("{parts:?} must be non-negative and sum to 1"),
            });
        }
        Ok(())
    }
}

/// Train/validation/test views over one id space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: InteractionSet,
    pub valid: InteractionSet,
    pub test: InteractionSet,
    pub split_seed: u64,
}

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }

    pub fn total_interactions(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }
}

/// `(train, valid, test)` sizes for a user with `n` interactions.
///
/// Validation and test get the floor of their share; a user with at least
/// three interactions always gets one test item; training keeps the rest and
/// never drops below one.
pub fn split_counts(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    let floor = |r: f64| libm::floor(r * n as f64 + 1e-9) as usize;
    let mut valid = floor(ratios.valid);
    let mut test = floor(ratios.test);
    if n >= 3 && test == 0 && ratios.test > 0.0 {
        test = 1;
    }
    while n > 0 && valid + test >= n {
        if valid > 0 {
            valid -= 1;
        } else {
            test -= 1;
        }
    }
    (n - valid - test, valid, test)
}

/// Shuffles each user's interactions with one seeded generator (users visited
/// in index order) and cuts them into test, validation and training parts.
pub fn split_user_based(set: &InteractionSet, ratios: SplitRatios, seed: u64) -> Result<SplitDataset> {
    ratios.validate()?;
    if set.is_empty() {
        return Err(Error::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = set.num_users();
    let mut train = Vec::with_capacity(users);
    let mut valid = Vec::with_capacity(users);
    let mut test = Vec::with_capacity(users);
    for u in 0..users as u32 {
        let mut items: Vec<u32> = set.items_of(u).to_vec();
        if items.is_empty() {
            return Err(Error::InvalidArgument {
                name: "interactions",
                reason: format!("user {u} has no interactions"),
            });
        }
        items.shuffle(&mut rng);
        let (_, n_valid, n_test) = split_counts(items.len(), &ratios);
        test.push(items[..n_test].to_vec());
        valid.push(items[n_test..n_test + n_valid].to_vec());
        train.push(items[n_test + n_valid..].to_vec());
    }
    let n = set.num_items();
    Ok(SplitDataset {
        train: InteractionSet::from_adjacency(n, train),
        valid: InteractionSet::from_adjacency(n, valid),
        test: InteractionSet::from_adjacency(n, test),
        split_seed: seed,
    })
}
