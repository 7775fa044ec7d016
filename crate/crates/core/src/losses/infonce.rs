use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dot, expf, lnf, norm, pairwise_sum};
use crate::matrix::Matrix;

/// Guard added to the product of norms in cosine similarity.
pub const COSINE_EPS: f64 = 1e-12;

/// `a·b / (|a||b| + eps)`, clamped to `[-1, 1]`. Zero vectors give 0.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    let s = dot(a, b) / (norm(a) * norm(b) + COSINE_EPS);
    s.clamp(-1.0, 1.0)
}

/// `-log softmax(logits)[pos]`, shifted by the max logit first. Also writes
/// the softmax probabilities into `probs`.
pub fn log_softmax_nll(logits: &[f64], pos: usize, probs: &mut Vec<f64>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    probs.clear();
    probs.extend(logits.iter().map(|&z| expf(z - max)));
    let total = pairwise_sum(probs);
    let inv = 1.0 / total;
    probs.iter_mut().for_each(|p| *p *= inv);
    lnf(total) - (logits[pos] - max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceOutput {
    pub value: f64,
    /// one gradient row per anchor
    pub anchor_grads: Matrix<f64>,
    /// one gradient row per candidate
    pub candidate_grads: Matrix<f64>,
}

/// InfoNCE over cosine similarities.
///
/// Anchor `a` is scored against every row of `candidates`; its positive is
/// `candidates[pos_index[a]]`. The value is the sum over anchors of
/// `-ln( exp(s(a, pos)/tau) / sum_c exp(s(a, c)/tau) )`.
pub fn infonce(
    anchors: &Matrix<f64>,
    candidates: &Matrix<f64>,
    pos_index: &[usize],
    tau: f64,
) -> Result<InfoNceOutput> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument { name: "tau", reason: alloc::format!("{tau} must be positive") });
    }
    if pos_index.len() != anchors.rows() {
        return Err(Error::Shape { what: "positive indices", expected: anchors.rows(), got: pos_index.len() });
    }
    if anchors.cols() != candidates.cols() {
        return Err(Error::Shape { what: "candidate dimension", expected: anchors.cols(), got: candidates.cols() });
    }
    if let Some(&bad) = pos_index.iter().find(|&&p| p >= candidates.rows()) {
        return Err(Error::Index { what: "positive", index: bad, limit: candidates.rows() });
    }
    let d = anchors.cols();
    let (n_anchor, n_cand) = (anchors.rows(), candidates.rows());
    let anchor_norms: Vec<f64> = (0..n_anchor).map(|k| norm(anchors.row(k))).collect();
    let cand_norms: Vec<f64> = (0..n_cand).map(|j| norm(candidates.row(j))).collect();
    let inv_tau = 1.0 / tau;

    // dots[k][j] = a_k . c_j, overwritten in place by dL/d(a_k . c_j)
    let mut dots = Matrix::<f64>::zeros(n_anchor, n_cand);
    gemm(anchors.as_slice(), false, candidates.as_slice(), true, &mut dots, d);

    let mut anchor_radial = vec![0.0; n_anchor];
    let mut cand_radial = vec![0.0; n_cand];
    let mut terms = vec![0.0; n_anchor];
    let mut logits = vec![0.0; n_cand];
    let mut clamped = vec![false; n_cand];
    let mut probs = Vec::with_capacity(n_cand);

    for (k, &pos) in pos_index.iter().enumerate() {
        let na = anchor_norms[k];
        let row = dots.row_mut(k);
        for j in 0..n_cand {
            let raw = row[j] / (na * cand_norms[j] + COSINE_EPS);
            let s = raw.clamp(-1.0, 1.0);
            clamped[j] = s != raw;
            logits[j] = s * inv_tau;
        }
        terms[k] = log_softmax_nll(&logits, pos, &mut probs);

        // dL/ds_j = (p_j - [j == pos]) / tau, and with n = |a||c| + eps
        // ds/da = c/n - (a.c) |c| / n^2 * a/|a|   (mirrored for c)
        for j in 0..n_cand {
            let g = if clamped[j] { 0.0 } else { (probs[j] - if j == pos { 1.0 } else { 0.0 }) * inv_tau };
            let inv_n = 1.0 / (na * cand_norms[j] + COSINE_EPS);
            let curv = g * row[j] * inv_n * inv_n;
            if na > 0.0 {
                anchor_radial[k] += curv * cand_norms[j] / na;
            }
            if cand_norms[j] > 0.0 {
                cand_radial[j] += curv * na / cand_norms[j];
            }
            row[j] = g * inv_n;
        }
    }

    let mut anchor_grads = Matrix::<f64>::zeros(n_anchor, d);
    gemm(dots.as_slice(), false, candidates.as_slice(), false, &mut anchor_grads, n_cand);
    let mut candidate_grads = Matrix::<f64>::zeros(n_cand, d);
    gemm(dots.as_slice(), true, anchors.as_slice(), false, &mut candidate_grads, n_anchor);
    for (k, &r) in anchor_radial.iter().enumerate() {
        for (x, a) in anchor_grads.row_mut(k).iter_mut().zip(anchors.row(k)) {
            *x -= r * a;
        }
    }
    for (j, &r) in cand_radial.iter().enumerate() {
        for (x, c) in candidate_grads.row_mut(j).iter_mut().zip(candidates.row(j)) {
            *x -= r * c;
        }
    }
    Ok(InfoNceOutput { value: pairwise_sum(&terms), anchor_grads, candidate_grads })
}

/// `out = op(x) * op(y)` for row-major operands, where `op` optionally
/// transposes and `inner` is the shared dimension.
fn gemm(x: &[f64], x_t: bool, y: &[f64], y_t: bool, out: &mut Matrix<f64>, inner: usize) {
    let (m, n) = (out.rows(), out.cols());
    if m == 0 || n == 0 {
        return;
    }
    // strides of op(x) (m x inner) and op(y) (inner x n)
    let (rsx, csx) = if x_t { (1, m) } else { (inner, 1) };
    let (rsy, csy) = if y_t { (1, inner) } else { (n, 1) };
    // SAFETY: the slices hold m*inner and inner*n elements laid out with the
    // strides above, and `out` holds m*n row-major elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            inner,
            n,
            1.0,
            x.as_ptr(),
            rsx as isize,
            csx as isize,
            y.as_ptr(),
            rsy as isize,
            csy as isize,
            0.0,
            out.as_mut_slice().as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
