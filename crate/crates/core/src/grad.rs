//! Sparse, row-keyed gradients over the matrices of a [`LayerStack`].
//!
//! [`LayerStack`]: crate::model::LayerStack

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

/// Which matrix a gradient row addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatrixId {
    /// Output of propagation layer `l` (layer 0 is the embedding table).
    Layer(u8),
    /// The readout assembled from all layers.
    Readout,
}

/// Gradient rows keyed by `(matrix, row)`. Iteration is in key order, so
/// anything folded over a `RowGrads` is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrads {
    dim: usize,
    index: BTreeMap<(MatrixId, u32), usize>,
    data: Vec<f64>,
}

impl RowGrads {
    pub fn new(dim: usize) -> Self {
        Self { dim, index: BTreeMap::new(), data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Mutable access to a row, created as zeros on first use.
    pub fn row_mut(&mut self, id: MatrixId, row: u32) -> &mut [f64] {
        let dim = self.dim;
        let next = self.data.len();
        let slot = *self.index.entry((id, row)).or_insert(next);
        if slot == next {
            self.data.resize(next + dim, 0.0);
        }
        &mut self.data[slot..slot + dim]
    }

    /// `grad[id, row] += scale * v`
    pub fn add_scaled(&mut self, id: MatrixId, row: u32, scale: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        for (g, x) in self.row_mut(id, row).iter_mut().zip(v) {
            *g += scale * x;
        }
    }

    pub fn get(&self, id: MatrixId, row: u32) -> Option<&[f64]> {
        self.index.get(&(id, row)).map(|&s| &self.data[s..s + self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (MatrixId, u32, &[f64])> + '_ {
        self.index.iter().map(|(&(id, row), &s)| (id, row, &self.data[s..s + self.dim]))
    }

    /// Rows of one matrix, ascending.
    pub fn rows_of(&self, id: MatrixId) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        self.index
            .range((id, 0)..=(id, u32::MAX))
            .map(|(&(_, row), &s)| (row, &self.data[s..s + self.dim]))
    }

    /// Matrices that carry at least one row.
    pub fn matrices(&self) -> Vec<MatrixId> {
        let mut ids: Vec<MatrixId> = self.index.keys().map(|k| k.0).collect();
        ids.dedup();
        ids
    }

    /// `self += scale * other`
    pub fn merge_scaled(&mut self, other: &RowGrads, scale: f64) {
        debug_assert_eq!(self.dim, other.dim);
        for (id, row, v) in other.iter() {
            self.add_scaled(id, row, scale, v);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
