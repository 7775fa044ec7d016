//! Reverse pass through the linear propagation pipeline, lazy Adam, and a
//! central-difference gradient check.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grad::{MatrixId, RowGrads};
use crate::graph::PropagationOperator;
use crate::matrix::Matrix;
use crate::model::ReadoutMode;
use crate::scalar::Scalar;

/// Sparse rows of a gradient with respect to the embedding table, sorted by
/// row index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    dim: usize,
    rows: Vec<u32>,
    data: Vec<f64>,
}

impl SparseRows {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: Vec::new(), data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a row; rows must be pushed in ascending order.
    pub fn push(&mut self, row: u32, values: &[f64]) {
        debug_assert!(self.rows.last().map_or(true, |&r| r < row));
        debug_assert_eq!(values.len(), self.dim);
        self.rows.push(row);
        self.data.extend_from_slice(values);
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        self.rows.iter().zip(self.data.chunks_exact(self.dim.max(1))).map(|(&r, v)| (r, v))
    }

    pub fn get(&self, row: u32) -> Option<&[f64]> {
        self.rows.binary_search(&row).ok().map(|k| &self.data[k * self.dim..(k + 1) * self.dim])
    }

    /// Dense copy with `rows` rows.
    pub fn to_dense(&self, rows: usize) -> Matrix<f64> {
        let mut m = Matrix::zeros(rows, self.dim);
        for (r, v) in self.iter() {
            m.row_mut(r as usize).copy_from_slice(v);
        }
        m
    }
}

/// Dense scratch rows with a record of which rows were written.
struct Scatter {
    dim: usize,
    data: Vec<f64>,
    touched: Vec<bool>,
    list: Vec<u32>,
}

impl Scatter {
    fn new(nodes: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; nodes * dim], touched: vec![false; nodes], list: Vec::new() }
    }

    #[inline]
    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        if !self.touched[r] {
            self.touched[r] = true;
            self.list.push(r as u32);
        }
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    fn add(&mut self, r: usize, scale: f64, v: &[f64]) {
        for (x, y) in self.row_mut(r).iter_mut().zip(v) {
            *x += scale * y;
        }
    }

    fn clear(&mut self) {
        for &r in &self.list {
            let r = r as usize;
            self.touched[r] = false;
            self.data[r * self.dim..(r + 1) * self.dim].iter_mut().for_each(|x| *x = 0.0);
        }
        self.list.clear();
    }

    /// `out += A * self`, visiting source rows in ascending order.
    fn propagate_into(&mut self, op: &PropagationOperator, out: &mut Scatter) {
        self.list.sort_unstable();
        let dim = self.dim;
        for &w in &self.list {
            let w = w as usize;
            let src = &self.data[w * dim..(w + 1) * dim];
            let (cols, weights) = op.row(w);
            for (&v, &wt) in cols.iter().zip(weights) {
                let dst = out.row_mut(v as usize);
                for (x, y) in dst.iter_mut().zip(src) {
                    *x += wt * y;
                }
            }
        }
    }

    fn drain_sorted(&mut self) -> SparseRows {
        self.list.sort_unstable();
        let mut out = SparseRows::new(self.dim);
        for &r in &self.list {
            let r = r as usize;
            out.rows.push(r as u32);
            out.data.extend_from_slice(&self.data[r * self.dim..(r + 1) * self.dim]);
        }
        self.clear();
        out
    }
}

/// Reusable buffers for [`backward`].
pub struct Backward {
    acc: Scatter,
    next: Scatter,
}

impl Backward {
    pub fn new(nodes: usize, dim: usize) -> Self {
        Self { acc: Scatter::new(nodes, dim), next: Scatter::new(nodes, dim) }
    }

    /// Total derivative with respect to the embedding table.
    ///
    /// Readout gradients are first spread over the layers with the readout
    /// weights. A gradient `G_l` at layer `l` then reaches layer 0 as
    /// `A^l G_l` (the operator is symmetric), evaluated Horner-style from
    /// the deepest layer down.
    pub fn run(
        &mut self,
        op: &PropagationOperator,
        depth: usize,
        mode: ReadoutMode,
        grads: &RowGrads,
    ) -> SparseRows {
        let weights = mode.layer_weights(depth);
        let readout: Vec<(u32, &[f64])> = grads.rows_of(MatrixId::Readout).collect();
        debug_assert!(grads.matrices().iter().all(|id| match id {
            MatrixId::Layer(l) => (*l as usize) <= depth,
            MatrixId::Readout => true,
        }));
        self.acc.clear();
        self.next.clear();
        for l in (0..=depth).rev() {
            if l < depth {
                self.acc.propagate_into(op, &mut self.next);
                self.acc.clear();
                core::mem::swap(&mut self.acc, &mut self.next);
            }
            for (row, v) in grads.rows_of(MatrixId::Layer(l as u8)) {
                self.acc.add(row as usize, 1.0, v);
            }
            if weights[l] != 0.0 {
                for &(row, v) in &readout {
                    self.acc.add(row as usize, weights[l], v);
                }
            }
        }
        self.acc.drain_sorted()
    }
}

/// One-shot [`Backward::run`].
pub fn backward(op: &PropagationOperator, depth: usize, mode: ReadoutMode, grads: &RowGrads) -> SparseRows {
    Backward::new(op.num_nodes(), grads.dim()).run(op, depth, mode, grads)
}

/// Adam moments for every table row plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Matrix<T>,
    pub v: Matrix<T>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(rows: usize, dim: usize, lr: f64) -> Self {
        Self {
            m: Matrix::zeros(rows, dim),
            v: Matrix::zeros(rows, dim),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Lazy Adam: only rows present in `grads` with a non-zero entry have
    /// their moments and weights updated; the bias correction uses the
    /// global step count, which advances once per call.
    pub fn step(&mut self, table: &mut Matrix<T>, grads: &SparseRows) -> Result<()> {
        if let Some((row, _)) = grads.iter().find(|(_, g)| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteGradient { row: row as usize });
        }
        if let Some((row, _)) = grads.iter().find(|(r, _)| *r as usize >= table.rows()) {
            return Err(Error::Index { what: "gradient row", index: row as usize, limit: table.rows() });
        }
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - libm::pow(self.beta1, t);
        let bc2 = 1.0 - libm::pow(self.beta2, t);
        let step_size = self.lr / bc1;
        let sqrt_bc2 = libm::sqrt(bc2);
        for (row, g) in grads.iter() {
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let r = row as usize;
            let (m, v, w) = (self.m.row_mut(r), self.v.row_mut(r), table.row_mut(r));
            for k in 0..g.len() {
                let mk = self.beta1 * m[k].to_f64() + (1.0 - self.beta1) * g[k];
                let vk = self.beta2 * v[k].to_f64() + (1.0 - self.beta2) * g[k] * g[k];
                m[k] = T::from_f64(mk);
                v[k] = T::from_f64(vk);
                let denom = libm::sqrt(vk) / sqrt_bc2 + self.eps;
                w[k] = T::from_f64(w[k].to_f64() - step_size * mk / denom);
            }
        }
        Ok(())
    }
}

/// Result of a central-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// `(row, col)` of the worst coordinate
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub probed: usize,
}

/// A loss value that can be differenced. Implemented for `f64`; wider
/// types let the difference be taken before rounding to `f64`.
pub trait FdValue {
    /// `self - other`, rounded to `f64`.
    fn minus(self, other: Self) -> f64;
}

impl FdValue for f64 {
    fn minus(self, other: Self) -> f64 {
        self - other
    }
}

/// Compares `analytic` with `(f(x + h) - f(x - h)) / 2h` on every coordinate
/// of the listed rows. Relative error is `|a - b| / max(|a|, |b|, 1e-8)`.
///
/// The divisor is the step actually taken after rounding `x +- h`, so tiny
/// `h` stay meaningful when the loss is evaluated in wider precision.
pub fn finite_diff_check<V: FdValue>(
    mut loss: impl FnMut(&Matrix<f64>) -> V,
    table: &Matrix<f64>,
    analytic: &SparseRows,
    rows: &[usize],
    h: f64,
) -> FdReport {
    let mut x = table.clone();
    let mut report = FdReport { max_rel_error: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0, probed: 0 };
    for &r in rows {
        for c in 0..table.cols() {
            let orig = table.get(r, c);
            let (hi, lo) = (orig + h, orig - h);
            x.set(r, c, hi);
            let up = loss(&x);
            x.set(r, c, lo);
            let down = loss(&x);
            x.set(r, c, orig);
            let numeric = up.minus(down) / (hi - lo);
            let a = analytic.get(r as u32).map_or(0.0, |v| v[c]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let err = (a - numeric).abs() / denom;
            report.probed += 1;
            if err > report.max_rel_error || report.probed == 1 {
                report = FdReport { max_rel_error: err, worst: (r, c), analytic: a, numeric, probed: report.probed };
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionSet;

    #[test]
    fn layer0_gradient_passes_through() {
        let op = PropagationOperator::from_train(&InteractionSet::from_pairs(1, 1, &[(0, 0)]).unwrap());
        let mut g = RowGrads::new(2);
        g.add_scaled(MatrixId::Layer(0), 1, 1.0, &[3.0, -1.0]);
        let out = backward(&op, 2, ReadoutMode::Mean, &g);
        assert_eq!(out.len(), 1);
        assert_eq!(out.get(1), Some(&[3.0, -1.0][..]));
    }

    #[test]
    fn layer1_gradient_hops_once() {
        let op = PropagationOperator::from_train(&InteractionSet::from_pairs(1, 1, &[(0, 0)]).unwrap());
        let mut g = RowGrads::new(2);
        g.add_scaled(MatrixId::Layer(1), 0, 1.0, &[1.0, 2.0]);
        let out = backward(&op, 1, ReadoutMode::Mean, &g);
        assert_eq!(out.get(0), None);
        assert_eq!(out.get(1), Some(&[1.0, 2.0][..]));
    }

    #[test]
    fn readout_spreads_over_layers() {
        let op = PropagationOperator::from_train(&InteractionSet::from_pairs(1, 1, &[(0, 0)]).unwrap());
        let mut g = RowGrads::new(1);
        g.add_scaled(MatrixId::Readout, 0, 1.0, &[4.0]);
        // L = 1: readout = (E0 + A E0) / 2, so d/dE0[u] = 2, d/dE0[i] = 2
        let out = backward(&op, 1, ReadoutMode::Mean, &g);
        assert_eq!(out.get(0), Some(&[2.0][..]));
        assert_eq!(out.get(1), Some(&[2.0][..]));
        let out0 = backward(&op, 1, ReadoutMode::Layer0, &g);
        assert_eq!(out0.get(0), Some(&[4.0][..]));
        assert_eq!(out0.get(1), None);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut table = Matrix::<f64>::from_vec(2, 1, alloc::vec![1.0, 1.0]).unwrap();
        let mut adam = AdamState::new(2, 1, 1e-3);
        let mut g = SparseRows::new(1);
        g.push(0, &[0.37]);
        adam.step(&mut table, &g).unwrap();
        // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
        let expected = 1.0 - 1e-3 * 0.37 / (0.37 + 1e-8);
        assert!((table.get(0, 0) - expected).abs() < 1e-15);
        assert!((table.get(0, 0) - (1.0 - 1e-3)).abs() < 1e-10);
        assert_eq!(table.get(1, 0), 1.0);
        assert_eq!(adam.v.get(1, 0), 0.0);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_negative_gradient_moves_up() {
        let mut table = Matrix::<f64>::zeros(1, 1);
        let mut adam = AdamState::new(1, 1, 1e-3);
        let mut g = SparseRows::new(1);
        g.push(0, &[-5.0]);
        adam.step(&mut table, &g).unwrap();
        assert!((table.get(0, 0) - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn adam_skips_zero_rows_and_rejects_nan() {
        let mut table = Matrix::<f64>::from_vec(2, 2, alloc::vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut adam = AdamState::new(2, 2, 1e-2);
        let mut g = SparseRows::new(2);
        g.push(0, &[0.0, 0.0]);
        g.push(1, &[0.5, -0.5]);
        adam.step(&mut table, &g).unwrap();
        assert_eq!(table.row(0), &[1.0, 2.0]);
        assert_eq!(adam.m.row(0), &[0.0, 0.0]);

        let before = (table.clone(), adam.clone());
        let mut bad = SparseRows::new(2);
        bad.push(1, &[f64::NAN, 0.0]);
        assert_eq!(adam.step(&mut table, &bad), Err(Error::NonFiniteGradient { row: 1 }));
        assert_eq!((table, adam), before);
    }

    #[test]
    fn lazy_equals_dense_when_every_row_has_gradient() {
        let rows = 4;
        let dim = 3;
        let mut table = Matrix::<f64>::from_fn(rows, dim, |r, c| (r as f64 - c as f64) * 0.1);
        let mut dense = table.clone();
        let mut adam = AdamState::new(rows, dim, 1e-2);
        let (mut m, mut v) = (vec![0.0; rows * dim], vec![0.0; rows * dim]);
        for step in 1..=50 {
            let grad_of = |r: usize, c: usize| ((step * 7 + r * 3 + c) % 11) as f64 / 5.0 - 1.0 + 1e-3;
            let mut g = SparseRows::new(dim);
            for r in 0..rows {
                let row: Vec<f64> = (0..dim).map(|c| grad_of(r, c)).collect();
                g.push(r as u32, &row);
            }
            adam.step(&mut table, &g).unwrap();
            // textbook dense Adam
            let (b1, b2, lr, eps) = (0.9f64, 0.999f64, 1e-2, 1e-8);
            for r in 0..rows {
                for c in 0..dim {
                    let k = r * dim + c;
                    let gk = grad_of(r, c);
                    m[k] = b1 * m[k] + (1.0 - b1) * gk;
                    v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                    let mh = m[k] / (1.0 - b1.powi(step as i32));
                    let vh = v[k] / (1.0 - b2.powi(step as i32));
                    let w = dense.get(r, c) - lr * mh / (vh.sqrt() + eps);
                    dense.set(r, c, w);
                }
            }
        }
        for (a, b) in table.as_slice().iter().zip(dense.as_slice()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn finite_difference_on_a_quadratic() {
        let x = Matrix::<f64>::from_vec(1, 2, alloc::vec![3.0, 0.0]).unwrap();
        let mut g = SparseRows::new(2);
        g.push(0, &[6.0, 0.0]);
        let rep = finite_diff_check(|m| m.row(0).iter().map(|v| v * v).sum::<f64>(), &x, &g, &[0], 1e-4);
        assert!(rep.max_rel_error < 1e-9, "{rep:?}");
        assert_eq!(rep.probed, 2);
    }

    #[test]
    fn finite_difference_on_a_constant_coordinate() {
        let x = Matrix::<f64>::from_vec(1, 2, alloc::vec![1.0, 2.0]).unwrap();
        let g = SparseRows::new(2);
        let rep = finite_diff_check(|m| 5.0 + 0.0 * m.get(0, 0), &x, &g, &[0], 1e-4);
        assert_eq!(rep.max_rel_error, 0.0);
    }
}
