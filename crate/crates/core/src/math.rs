//! Small numeric kernels shared by the losses, propagation and evaluation.

use libm::{exp, log, log1p, sqrt};

#[inline]
pub fn sqrtf(x: f64) -> f64 {
    sqrt(x)
}

#[inline]
pub fn expf(x: f64) -> f64 {
    exp(x)
}

#[inline]
pub fn lnf(x: f64) -> f64 {
    log(x)
}

#[inline]
pub fn log2f(x: f64) -> f64 {
    libm::log2(x)
}

/// Logistic sigmoid, evaluated on the side that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `-ln σ(x)`, i.e. `softplus(-x)`, without cancellation for large |x|.
#[inline]
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        log1p(exp(-x))
    } else {
        -x + log1p(exp(x))
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let x = &a[c * 8..c * 8 + 8];
        let y = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how work was split between callers.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neg_log_sigmoid_matches_direct_form() {
        for &x in &[-30.0, -3.0, -0.5, 0.0, 0.5, 3.0, 30.0] {
            let direct = -lnf(sigmoid(x));
            assert!((neg_log_sigmoid(x) - direct).abs() < 1e-12, "{x}");
        }
        assert!((neg_log_sigmoid(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dot_handles_tails() {
        let a: alloc::vec::Vec<f64> = (0..13).map(|v| v as f64).collect();
        let b: alloc::vec::Vec<f64> = (0..13).map(|v| 1.0 + v as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot(&a, &b), naive);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: alloc::vec::Vec<f64> = (0..1000).map(|v| v as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
