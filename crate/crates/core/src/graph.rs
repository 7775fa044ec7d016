//! Bipartite interaction graph and the symmetric-normalized propagation
//! operator `D^{-1/2} A D^{-1/2}`.
//!
//! Node numbering follows the block layout of the adjacency matrix: users
//! occupy `0..M`, item `i` is node `M + i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::InteractionSet;
use crate::error::{Error, Result};
use crate::math::sqrtf;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Compressed sparse row adjacency over `M + N` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
}

impl InteractionGraph {
    pub fn build(train: &InteractionSet) -> Self {
        let m = train.num_users();
        let n = train.num_items();
        let mut item_rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, i) in train.pairs() {
            item_rows[i as usize].push(u);
        }
        let mut offsets = Vec::with_capacity(m + n + 1);
        let mut cols = Vec::with_capacity(2 * train.len());
        offsets.push(0);
        for u in 0..m as u32 {
            cols.extend(train.items_of(u).iter().map(|&i| m as u32 + i));
            offsets.push(cols.len());
        }
        // users were visited in ascending order, so item rows are sorted
        for row in item_rows {
            cols.extend_from_slice(&row);
            offsets.push(cols.len());
        }
        Self { num_users: m, num_items: n, offsets, cols }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Stored entries; every interaction appears twice.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.cols[self.offsets[node]..self.offsets[node + 1]]
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }
}

/// Edge weights `1 / sqrt(deg(u) * deg(i))` on the sparsity pattern of an
/// [`InteractionGraph`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOperator {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl PropagationOperator {
    pub fn normalize(graph: &InteractionGraph) -> Self {
        let mut weights = Vec::with_capacity(graph.nnz());
        for v in 0..graph.num_nodes() {
            let dv = graph.degree(v) as f64;
            for &w in graph.neighbors(v) {
                // the product is commutative, so (u, i) and (i, u) agree bitwise
                let dw = graph.degree(w as usize) as f64;
                weights.push(1.0 / sqrtf(dv * dw));
            }
        }
        Self {
            num_users: graph.num_users,
            num_items: graph.num_items,
            offsets: graph.offsets.clone(),
            cols: graph.cols.clone(),
            weights,
        }
    }

    pub fn from_train(train: &InteractionSet) -> Self {
        Self::normalize(&InteractionGraph::build(train))
    }

    /// Reassembles an operator from raw CSR arrays (used by the binary cache).
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        offsets: Vec<usize>,
        cols: Vec<u32>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let nodes = num_users + num_items;
        if offsets.len() != nodes + 1 {
            return Err(Error::Shape { what: "row offsets", expected: nodes + 1, got: offsets.len() });
        }
        if cols.len() != weights.len() || offsets[nodes] != cols.len() || offsets[0] != 0 {
            return Err(Error::Shape { what: "column/weight arrays", expected: offsets[nodes], got: cols.len() });
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument { name: "row offsets", reason: "not monotone".into() });
        }
        if let Some(&c) = cols.iter().find(|&&c| c as usize >= nodes) {
            return Err(Error::Index { what: "column", index: c as usize, limit: nodes });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidArgument { name: "weights", reason: "must be positive and finite".into() });
        }
        Ok(Self { num_users, num_items, offsets, cols, weights })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(neighbor, weight)` pairs of one row.
    #[inline]
    pub fn row(&self, node: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[node]..self.offsets[node + 1];
        (&self.cols[r.clone()], &self.weights[r])
    }

    /// Weight of the stored entry `(a, b)`, if present.
    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let (cols, w) = self.row(a);
        cols.binary_search(&(b as u32)).ok().map(|k| w[k])
    }

    /// One sparse-dense product: `out[v] = sum_w weight(v, w) * e[w]`, with
    /// 64-bit accumulation. Isolated nodes produce zero rows.
    pub fn propagate<T: Scalar>(&self, e: &Matrix<T>) -> Result<Matrix<T>> {
        if e.rows() != self.num_nodes() {
            return Err(Error::Shape { what: "embedding rows", expected: self.num_nodes(), got: e.rows() });
        }
        let d = e.cols();
        let mut out = Matrix::zeros(e.rows(), d);
        let mut acc = vec![0.0f64; d];
        for v in 0..self.num_nodes() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let (cols, weights) = self.row(v);
            for (&w, &wt) in cols.iter().zip(weights) {
                for (a, x) in acc.iter_mut().zip(e.row(w as usize)) {
                    *a += wt * x.to_f64();
                }
            }
            for (o, a) in out.row_mut(v).iter_mut().zip(&acc) {
                *o = T::from_f64(*a);
            }
        }
        Ok(out)
    }

    /// Dense copy of the operator, for tests and small oracles.
    pub fn to_dense(&self) -> Matrix<f64> {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for v in 0..n {
            let (cols, w) = self.row(v);
            for (&c, &wt) in cols.iter().zip(w) {
                m.set(v, c as usize, wt);
            }
        }
        m
    }
}
