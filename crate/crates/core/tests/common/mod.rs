#![allow(dead_code)]

pub mod dd;
pub mod oracle;

use layercl_core::data::{sample_bpr_batch, InteractionSet, TrainBatch};
use layercl_core::{EmbeddingTable, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bipartite graph in which every user and every item has an edge.
pub fn toy_train(users: usize, items: usize, extra: usize, rng: &mut ChaCha8Rng) -> InteractionSet {
    let mut pairs = Vec::new();
    for u in 0..users {
        pairs.push((u as u32, rng.random_range(0..items as u32)));
    }
    for i in 0..items {
        pairs.push((rng.random_range(0..users as u32), i as u32));
    }
    for _ in 0..extra {
        pairs.push((rng.random_range(0..users as u32), rng.random_range(0..items as u32)));
    }
    let set = InteractionSet::from_pairs(users, items, &pairs).unwrap();
    // keep at least one unobserved item per user so negatives exist
    let open: Vec<(u32, u32)> = set
        .pairs()
        .filter(|&(u, i)| set.degree(u) < items || i != 0)
        .collect();
    InteractionSet::from_pairs(users, items, &open).unwrap()
}

pub struct Toy {
    pub train: InteractionSet,
    pub table: EmbeddingTable<f64>,
    pub batch: TrainBatch,
}

pub fn toy(seed: u64, users: usize, items: usize, dim: usize, batch: usize) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = toy_train(users, items, users * 2, &mut rng);
    let table = EmbeddingTable::xavier(users, items, dim, seed ^ 0x5eed).unwrap();
    let batch = sample_bpr_batch(&train, batch, &mut rng).unwrap();
    Toy { train, table, batch }
}

pub fn table_with(t: &EmbeddingTable<f64>, weights: &Matrix<f64>) -> EmbeddingTable<f64> {
    EmbeddingTable { weights: weights.clone(), ..t.clone() }
}

pub fn rows_of(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}
