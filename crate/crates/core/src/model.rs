//! Embedding table, LightGCN forward propagation and all-item ranking.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::PropagationOperator;
use crate::math::{dot, sqrtf};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Learnable layer-0 embeddings, users first then items.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub num_users: usize,
    pub num_items: usize,
    pub weights: Matrix<T>,
    pub init_seed: u64,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Xavier-uniform initialization with `fan_in = fan_out = dim`.
    pub fn xavier(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument { name: "dim", reason: "must be at least 1".into() });
        }
        let bound = xavier_bound(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Matrix::from_fn(num_users + num_items, dim, |_, _| {
            let u: f64 = rng.random();
            bound * (2.0 * u - 1.0)
        });
        Ok(Self { num_users, num_items, weights, init_seed: seed })
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }
}

/// `sqrt(6 / (fan_in + fan_out))` for a square `dim x dim` fan.
pub fn xavier_bound(dim: usize) -> f64 {
    sqrtf(6.0 / (2 * dim) as f64)
}

/// How the final embedding is assembled from the layer outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutMode {
    /// Mean over layers `0..=L`.
    #[default]
    Mean,
    /// Layer 0 only.
    Layer0,
}

impl ReadoutMode {
    /// Weight of each layer in the readout.
    pub fn layer_weights(self, depth: usize) -> Vec<f64> {
        match self {
            ReadoutMode::Mean => vec![1.0 / (depth + 1) as f64; depth + 1],
            ReadoutMode::Layer0 => {
                let mut w = vec![0.0; depth + 1];
                w[0] = 1.0;
                w
            }
        }
    }
}

/// Per-layer outputs `E(0)..E(L)` and their readout.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<T> {
    pub num_users: usize,
    pub num_items: usize,
    pub layers: Vec<Matrix<T>>,
    pub readout: Matrix<T>,
    pub mode: ReadoutMode,
}

impl<T: Scalar> LayerStack<T> {
    /// Number of propagation steps `L`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, l: usize) -> &Matrix<T> {
        &self.layers[l]
    }

    pub fn user_node(&self, u: u32) -> usize {
        u as usize
    }

    pub fn item_node(&self, i: u32) -> usize {
        self.num_users + i as usize
    }
}

/// Runs `depth` propagation steps from the table and assembles the readout.
pub fn forward<T: Scalar>(
    table: &EmbeddingTable<T>,
    op: &PropagationOperator,
    depth: usize,
    mode: ReadoutMode,
) -> Result<LayerStack<T>> {
    let mut layers = Vec::with_capacity(depth + 1);
    layers.push(table.weights.clone());
    for l in 0..depth {
        let next = op.propagate(&layers[l])?;
        layers.push(next);
    }
    let readout = readout(&layers, mode);
    Ok(LayerStack {
        num_users: table.num_users,
        num_items: table.num_items,
        layers,
        readout,
        mode,
    })
}

fn readout<T: Scalar>(layers: &[Matrix<T>], mode: ReadoutMode) -> Matrix<T> {
    let weights = mode.layer_weights(layers.len() - 1);
    let first = &layers[0];
    if weights[0] == 1.0 && weights[1..].iter().all(|&w| w == 0.0) {
        return first.clone();
    }
    let mut acc = vec![0.0f64; first.rows() * first.cols()];
    for (layer, &w) in layers.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        for (a, x) in acc.iter_mut().zip(layer.as_slice()) {
            *a += w * x.to_f64();
        }
    }
    Matrix::from_vec(first.rows(), first.cols(), acc.into_iter().map(T::from_f64).collect())
        .expect("shape preserved")
}

/// Inner product of user `u` and item `i` in the readout.
pub fn score<T: Scalar>(stack: &LayerStack<T>, u: u32, i: u32) -> Result<f64> {
    if u as usize >= stack.num_users {
        return Err(Error::Index { what: "user", index: u as usize, limit: stack.num_users });
    }
    if i as usize >= stack.num_items {
        return Err(Error::Index { what: "item", index: i as usize, limit: stack.num_items });
    }
    let eu = stack.readout.row_f64(stack.user_node(u));
    let ei = stack.readout.row_f64(stack.item_node(i));
    Ok(dot(&eu, &ei))
}

/// Readout split into `f64` user and item blocks for scoring.
#[derive(Debug, Clone)]
pub struct ScoringTable {
    pub users: Matrix<f64>,
    pub items: Matrix<f64>,
}

impl ScoringTable {
    pub fn from_readout<T: Scalar>(readout: &Matrix<T>, num_users: usize) -> Self {
        let d = readout.cols();
        let users = Matrix::from_fn(num_users, d, |r, c| readout.get(r, c).to_f64());
        let items = Matrix::from_fn(readout.rows() - num_users, d, |r, c| readout.get(num_users + r, c).to_f64());
        Self { users, items }
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    /// Scores of user `u` against every item.
    pub fn scores_into(&self, u: u32, out: &mut Vec<f64>) {
        let eu = self.users.row(u as usize);
        out.clear();
        out.extend((0..self.items.rows()).map(|i| dot(eu, self.items.row(i))));
    }

    /// Top-`k` items of user `u`, skipping items flagged in `excluded`.
    pub fn rank(&self, u: u32, excluded: &[bool], k: usize) -> Vec<u32> {
        let mut scores = Vec::with_capacity(self.num_items());
        self.scores_into(u, &mut scores);
        top_k(&scores, excluded, k)
    }
}

fn by_score_then_index(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Indices of the `k` largest scores (descending; ties by ascending index),
/// ignoring every index with `excluded[i] == true`. Returns fewer than `k`
/// when not enough candidates remain.
pub fn top_k(scores: &[f64], excluded: &[bool], k: usize) -> Vec<u32> {
    let mut cand: Vec<(f64, u32)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded.get(*i).copied().unwrap_or(false))
        .map(|(i, &s)| (s, i as u32))
        .collect();
    if k == 0 {
        return Vec::new();
    }
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, by_score_then_index);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_score_then_index);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Ranks all items for user `u`, dropping `exclude`, and keeps the top `k`.
pub fn rank_items<T: Scalar>(stack: &LayerStack<T>, u: u32, exclude: &[u32], k: usize) -> Result<Vec<u32>> {
    if k == 0 {
        return Err(Error::InvalidArgument { name: "k", reason: "must be at least 1".into() });
    }
    if u as usize >= stack.num_users {
        return Err(Error::Index { what: "user", index: u as usize, limit: stack.num_users });
    }
    let eu = stack.readout.row_f64(stack.user_node(u));
    let mut scores = vec![0.0; stack.num_items];
    let mut item = vec![0.0; stack.readout.cols()];
    for (i, s) in scores.iter_mut().enumerate() {
        stack.readout.row_f64_into(stack.item_node(i as u32), &mut item);
        *s = dot(&eu, &item);
    }
    let mut excluded = vec![false; stack.num_items];
    for &i in exclude {
        if let Some(slot) = excluded.get_mut(i as usize) {
            *slot = true;
        }
    }
    Ok(top_k(&scores, &excluded, k))
}
