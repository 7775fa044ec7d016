use alloc::vec::Vec;

use rand::Rng;

use super::interactions::InteractionSet;
use crate::error::{Error, Result};

const MAX_REJECTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainBatch {
    pub triples: Vec<Triple>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// The observed `(user, positive item)` edges of the batch.
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        self.triples.iter().map(|t| (t.user, t.pos)).collect()
    }
}

/// Uniform positive-pair sampler with uniform negatives over each user's
/// unobserved items.
#[derive(Debug, Clone)]
pub struct NegativeSampler<'a> {
    train: &'a InteractionSet,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(train: &'a InteractionSet) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty);
        }
        let n = train.num_items();
        let any_open = (0..train.num_users() as u32).any(|u| {
            let d = train.degree(u);
            d > 0 && d < n
        });
        if !any_open {
            return Err(Error::AllUsersSaturated { num_items: n });
        }
        Ok(Self { train })
    }

    /// Uniform draw from the items user `u` has not interacted with. Tries
    /// rejection sampling first and falls back to indexing the complement.
    /// The caller guarantees the complement is non-empty.
    pub fn negative_for<R: Rng + ?Sized>(&self, u: u32, rng: &mut R) -> u32 {
        let n = self.train.num_items() as u32;
        let seen = self.train.items_of(u);
        debug_assert!(seen.len() < n as usize);
        for _ in 0..MAX_REJECTIONS {
            let j = rng.random_range(0..n);
            if seen.binary_search(&j).is_err() {
                return j;
            }
        }
        let mut r = rng.random_range(0..n - seen.len() as u32);
        // walk the gaps between consecutive observed items
        let mut next_free = 0u32;
        for &s in seen {
            let gap = s - next_free;
            if r < gap {
                return next_free + r;
            }
            r -= gap;
            next_free = s + 1;
        }
        next_free + r
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> TrainBatch {
        let n = self.train.num_items();
        let total = self.train.len();
        let mut triples = Vec::with_capacity(batch_size);
        while triples.len() < batch_size {
            let (user, pos) = self.train.pair_at(rng.random_range(0..total));
            if self.train.degree(user) >= n {
                continue;
            }
            let neg = self.negative_for(user, rng);
            debug_assert!(!self.train.contains(user, neg));
            triples.push(Triple { user, pos, neg });
        }
        TrainBatch { triples }
    }
}

/// Draws `batch_size` training triples `(u, i+, i-)`.
pub fn sample_bpr_batch<R: Rng + ?Sized>(
    train: &InteractionSet,
    batch_size: usize,
    rng: &mut R,
) -> Result<TrainBatch> {
    if batch_size == 0 {
        return Ok(TrainBatch::default());
    }
    Ok(NegativeSampler::new(train)?.sample(batch_size, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forced_negative() {
        // user 0 saw every item but 7
        let pairs: Vec<(u32, u32)> = (0..10).filter(|&i| i != 7).map(|i| (0, i)).collect();
        let set = InteractionSet::from_pairs(1, 10, &pairs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_bpr_batch(&set, 200, &mut rng).unwrap();
        assert!(batch.triples.iter().all(|t| t.neg == 7));
    }

    #[test]
    fn empty_batch() {
        let set = InteractionSet::from_pairs(1, 2, &[(0, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_bpr_batch(&set, 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn saturated_users_are_skipped() {
        // user 0 saturated, user 1 open
        let set = InteractionSet::from_pairs(2, 2, &[(0, 0), (0, 1), (1, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = sample_bpr_batch(&set, 50, &mut rng).unwrap();
        assert!(batch.triples.iter().all(|t| t.user == 1 && t.pos == 0 && t.neg == 1));
    }

    #[test]
    fn all_saturated_is_an_error() {
        let set = InteractionSet::from_pairs(2, 1, &[(0, 0), (1, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            sample_bpr_batch(&set, 4, &mut rng).unwrap_err(),
            Error::AllUsersSaturated { num_items: 1 }
        );
    }

    #[test]
    fn complement_fallback_is_uniform_and_valid() {
        // dense user: rejection almost always exhausts, exercising the scan
        let n = 4000u32;
        let free = [5u32, 17, 1999, 3999];
        let pairs: Vec<(u32, u32)> = (0..n).filter(|i| !free.contains(i)).map(|i| (0, i)).collect();
        let set = InteractionSet::from_pairs(1, n as usize, &pairs).unwrap();
        let sampler = NegativeSampler::new(&set).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            let j = sampler.negative_for(0, &mut rng);
            counts[free.iter().position(|&f| f == j).unwrap()] += 1;
        }
        for c in counts {
            assert!((850..1150).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn negatives_are_uniform_over_the_complement() {
        // one user, 12 items, 4 observed; chi-square against uniform over the 8 others
        let observed = [1u32, 4, 6, 10];
        let pairs: Vec<(u32, u32)> = observed.iter().map(|&i| (0, i)).collect();
        let set = InteractionSet::from_pairs(1, 12, &pairs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let batch = sample_bpr_batch(&set, 100_000, &mut rng).unwrap();
        let mut counts = [0f64; 12];
        for t in &batch.triples {
            assert!(!observed.contains(&t.neg));
            counts[t.neg as usize] += 1.0;
        }
        let k = 8.0;
        let expected = 100_000.0 / k;
        let chi2: f64 = (0..12)
            .filter(|i| !observed.contains(&(*i as u32)))
            .map(|i| (counts[i] - expected).powi(2) / expected)
            .sum();
        // 7 degrees of freedom: mean 7, sd sqrt(14); 3 sigma above the mean
        assert!(chi2 < 7.0 + 3.0 * 14f64.sqrt(), "chi2 = {chi2}");
        // per-cell multinomial 3-sigma band
        let p = 1.0 / k;
        let sd = (100_000.0 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            if !observed.contains(&(i as u32)) {
                assert!((c - expected).abs() < 3.0 * sd, "item {i}: {c}");
            }
        }
    }
}
