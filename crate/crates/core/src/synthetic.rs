//! Seeded synthetic interaction data with planted preference clusters and
//! long-tailed user activity and item popularity.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::InteractionSet;
use crate::error::{Error, Result};
use crate::math::{expf, lnf, sqrtf};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Approximate number of interactions before deduplication
    pub interactions: usize,
    pub clusters: usize,
    /// Probability that an interaction stays inside the user's cluster
    pub affinity: f64,
    /// Log-normal spread of user activity
    pub activity_sigma: f64,
    /// Log-normal spread of item popularity
    pub popularity_sigma: f64,
    pub min_degree: usize,
    /// Dimension of the per-user and per-item taste vectors; 0 disables them
    pub taste_dim: usize,
    /// How strongly taste agreement reweights draws inside a cluster
    pub taste_sharpness: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_users: 2000,
            num_items: 1500,
            interactions: 40_000,
            clusters: 12,
            affinity: 0.8,
            activity_sigma: 0.9,
            popularity_sigma: 1.0,
            min_degree: 5,
            taste_dim: 8,
            taste_sharpness: 2.0,
            seed: 7,
        }
    }
}

/// The generated dataset together with the planted structure.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub interactions: InteractionSet,
    pub user_cluster: Vec<u32>,
    pub item_cluster: Vec<u32>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    sqrtf(-2.0 * lnf(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Cumulative weights for inverse-transform sampling.
struct Table {
    ids: Vec<u32>,
    cum: Vec<f64>,
}

impl Table {
    fn new(ids: Vec<u32>, weight: impl Fn(u32) -> f64) -> Self {
        let mut acc = 0.0;
        let cum = ids
            .iter()
            .map(|&i| {
                acc += weight(i);
                acc
            })
            .collect();
        Self { ids, cum }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        let total = *self.cum.last().expect("non-empty table");
        let x = rng.random::<f64>() * total;
        let k = self.cum.partition_point(|&c| c <= x).min(self.ids.len() - 1);
        self.ids[k]
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let bad = |name, reason: &str| Err(Error::InvalidArgument { name, reason: reason.into() });
    if cfg.num_users == 0 || cfg.num_items == 0 {
        return bad("num_users", "user and item counts must be positive");
    }
    if cfg.clusters == 0 || cfg.clusters > cfg.num_items {
        return bad("clusters", "must be between 1 and the number of items");
    }
    if !(0.0..=1.0).contains(&cfg.affinity) {
        return bad("affinity", "must lie in [0, 1]");
    }
    if cfg.min_degree > cfg.num_items {
        return bad("min_degree", "exceeds the number of items");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.clusters as u32;
    let user_cluster: Vec<u32> = (0..cfg.num_users).map(|_| rng.random_range(0..k)).collect();
    // every cluster owns at least one item
    let item_cluster: Vec<u32> =
        (0..cfg.num_items).map(|i| if i < cfg.clusters { i as u32 } else { rng.random_range(0..k) }).collect();
    let popularity: Vec<f64> = (0..cfg.num_items).map(|_| expf(cfg.popularity_sigma * normal(&mut rng))).collect();
    let activity: Vec<f64> = (0..cfg.num_users).map(|_| expf(cfg.activity_sigma * normal(&mut rng))).collect();
    let total_activity: f64 = activity.iter().sum();

    let everything = Table::new((0..cfg.num_items as u32).collect(), |i| popularity[i as usize]);
    let per_cluster: Vec<Table> = (0..k)
        .map(|c| {
            let ids = (0..cfg.num_items as u32).filter(|&i| item_cluster[i as usize] == c).collect();
            Table::new(ids, |i| popularity[i as usize])
        })
        .collect();

    let dim = cfg.taste_dim;
    let scale = if dim == 0 { 0.0 } else { cfg.taste_sharpness / sqrtf(dim as f64) };
    let item_taste: Vec<f64> = (0..cfg.num_items * dim).map(|_| normal(&mut rng)).collect();
    let mut user_taste = vec![0.0; dim];

    let cap = cfg.num_items / 2;
    let mut pairs = Vec::with_capacity(cfg.interactions + cfg.num_users * cfg.min_degree);
    let mut mine: Vec<u32> = Vec::new();
    for u in 0..cfg.num_users {
        let want = (activity[u] / total_activity * cfg.interactions as f64) as usize;
        let degree = want.clamp(cfg.min_degree, cap.max(cfg.min_degree));
        mine.clear();
        user_taste.iter_mut().for_each(|x| *x = normal(&mut rng));
        let home = &per_cluster[user_cluster[u] as usize];
        let personal = Table::new(home.ids.clone(), |i| {
            let v = &item_taste[i as usize * dim..(i as usize + 1) * dim];
            let agree: f64 = v.iter().zip(&user_taste).map(|(a, b)| a * b).sum();
            popularity[i as usize] * expf(scale * agree)
        });
        let mut tries = 0;
        while mine.len() < degree && tries < degree * 20 {
            tries += 1;
            let table = if rng.random::<f64>() < cfg.affinity { &personal } else { &everything };
            let i = table.draw(&mut rng);
            if !mine.contains(&i) {
                mine.push(i);
            }
        }
        pairs.extend(mine.iter().map(|&i| (u as u32, i)));
    }
    let interactions = InteractionSet::from_pairs(cfg.num_users, cfg.num_items, &pairs)?;
    Ok(SyntheticData { interactions, user_cluster, item_cluster })
}
