//! Naive dense reference implementations, generic over the float type so the
//! same code runs in `f64` and in double-double.

use std::ops::{Add, Div, Mul, Neg, Sub};

use layercl_core::data::{InteractionSet, Triple};
use layercl_core::losses::{ClHyper, ContrastScheme};
use layercl_core::ReadoutMode;

use super::dd::Dd;

pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn c(x: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn val(self) -> f64;
}

impl Real for f64 {
    fn c(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn val(self) -> f64 {
        self
    }
}

impl Real for Dd {
    fn c(x: f64) -> Self {
        Dd::from(x)
    }
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    fn ln(self) -> Self {
        Dd::ln(self)
    }
    fn sqrt(self) -> Self {
        Dd::sqrt(self)
    }
    fn val(self) -> f64 {
        self.to_f64()
    }
}

pub type Mat<R> = Vec<Vec<R>>;

pub fn dense_adjacency<R: Real>(train: &InteractionSet) -> Mat<R> {
    let (m, n) = (train.num_users(), train.num_items());
    let mut a = vec![vec![R::c(0.0); m + n]; m + n];
    let item_deg = train.item_degrees();
    for (u, i) in train.pairs() {
        let du = train.degree(u) as f64;
        let di = item_deg[i as usize] as f64;
        let w = R::c(1.0) / (R::c(du) * R::c(di)).sqrt();
        a[u as usize][m + i as usize] = w;
        a[m + i as usize][u as usize] = w;
    }
    a
}

pub fn matmul<R: Real>(a: &Mat<R>, e: &Mat<R>) -> Mat<R> {
    let d = e[0].len();
    a.iter()
        .map(|row| {
            (0..d)
                .map(|c| {
                    let mut s = R::c(0.0);
                    for (k, &w) in row.iter().enumerate() {
                        s = s + w * e[k][c];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn layers<R: Real>(a: &Mat<R>, e0: Mat<R>, depth: usize) -> Vec<Mat<R>> {
    let mut out = vec![e0];
    for l in 0..depth {
        let next = matmul(a, &out[l]);
        out.push(next);
    }
    out
}

pub fn readout<R: Real>(layers: &[Mat<R>], mode: ReadoutMode) -> Mat<R> {
    match mode {
        ReadoutMode::Layer0 => layers[0].clone(),
        ReadoutMode::Mean => {
            let k = R::c(layers.len() as f64);
            let mut out = layers[0].clone();
            for l in &layers[1..] {
                for (o, r) in out.iter_mut().zip(l) {
                    for (x, y) in o.iter_mut().zip(r) {
                        *x = *x + *y;
                    }
                }
            }
            for row in &mut out {
                for x in row.iter_mut() {
                    *x = *x / k;
                }
            }
            out
        }
    }
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::c(0.0), |s, (&x, &y)| s + x * y)
}

pub fn cosine<R: Real>(a: &[R], b: &[R]) -> R {
    let s = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt() + R::c(1e-12));
    let v = s.val();
    if v > 1.0 {
        R::c(1.0)
    } else if v < -1.0 {
        R::c(-1.0)
    } else {
        s
    }
}

/// `-ln(exp(s_pos / tau) / sum_j exp(s_j / tau))` for one anchor.
pub fn infonce_term<R: Real>(anchor: &[R], cands: &[Vec<R>], pos: usize, tau: f64) -> R {
    let logits: Vec<R> = cands.iter().map(|c| cosine(anchor, c) / R::c(tau)).collect();
    let mut total = R::c(0.0);
    for &z in &logits {
        total = total + (z - logits[pos]).exp();
    }
    total.ln()
}

pub fn bpr<R: Real>(readout: &Mat<R>, m: usize, triples: &[Triple]) -> R {
    let mut s = R::c(0.0);
    for t in triples {
        let u = &readout[t.user as usize];
        let x = dot(u, &readout[m + t.pos as usize]) - dot(u, &readout[m + t.neg as usize]);
        s = s + (R::c(1.0) + (-x).exp()).ln();
    }
    s
}

fn view<R: Real>(layers: &[Mat<R>], node: usize, which: &[usize]) -> Vec<R> {
    let d = layers[0][0].len();
    let k = R::c(which.len() as f64);
    (0..d)
        .map(|c| which.iter().fold(R::c(0.0), |s, &l| s + layers[l][node][c]) / k)
        .collect()
}

fn uniq(mut v: Vec<usize>) -> Vec<usize> {
    v.sort();
    v.dedup();
    v
}

/// Each edge anchors once. `user_side` anchors on the item and ranks the
/// batch users, otherwise on the user ranking the batch items.
fn hetero<R: Real>(
    layers: &[Mat<R>],
    m: usize,
    pairs: &[(usize, usize)],
    av: &[usize],
    cv: &[usize],
    user_side: bool,
    tau: f64,
) -> R {
    let cand_nodes = if user_side {
        uniq(pairs.iter().map(|p| p.0).collect())
    } else {
        uniq(pairs.iter().map(|p| m + p.1).collect())
    };
    let cands: Vec<Vec<R>> = cand_nodes.iter().map(|&n| view(layers, n, cv)).collect();
    let mut s = R::c(0.0);
    for &(u, i) in pairs {
        let (anchor, pos) = if user_side { (m + i, u) } else { (u, m + i) };
        let p = cand_nodes.iter().position(|&n| n == pos).unwrap();
        s = s + infonce_term(&view(layers, anchor, av), &cands, p, tau);
    }
    s
}

fn homo<R: Real>(layers: &[Mat<R>], nodes: &[usize], av: &[usize], cv: &[usize], tau: f64) -> R {
    let nodes = uniq(nodes.to_vec());
    let cands: Vec<Vec<R>> = nodes.iter().map(|&n| view(layers, n, cv)).collect();
    let mut s = R::c(0.0);
    for (k, &n) in nodes.iter().enumerate() {
        s = s + infonce_term(&view(layers, n, av), &cands, k, tau);
    }
    s
}

pub fn scheme<R: Real>(layers: &[Mat<R>], m: usize, triples: &[Triple], scheme: ContrastScheme, tau: f64, alpha: f64) -> R {
    let pairs: Vec<(usize, usize)> = triples.iter().map(|t| (t.user as usize, t.pos as usize)).collect();
    let users: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let items: Vec<usize> = pairs.iter().map(|p| m + p.1).collect();
    let (a, b) = (R::c(alpha), R::c(1.0 - alpha));
    match scheme {
        ContrastScheme::U0I0 => hetero(layers, m, &pairs, &[0], &[0], true, tau),
        ContrastScheme::U1I1 => hetero(layers, m, &pairs, &[1], &[1], true, tau),
        ContrastScheme::U0I1 => {
            a * hetero(layers, m, &pairs, &[1], &[0], true, tau) + b * hetero(layers, m, &pairs, &[1], &[0], false, tau)
        }
        ContrastScheme::U0U2 => a * homo(layers, &users, &[0], &[2], tau) + b * homo(layers, &items, &[0], &[2], tau),
        ContrastScheme::U0SumU123 => {
            a * homo(layers, &users, &[0], &[1, 2, 3], tau) + b * homo(layers, &items, &[0], &[1, 2, 3], tau)
        }
    }
}

/// The full training objective evaluated from scratch.
#[allow(clippy::too_many_arguments)]
pub fn objective<R: Real>(
    train: &InteractionSet,
    weights: &[Vec<f64>],
    triples: &[Triple],
    scheme_: Option<ContrastScheme>,
    depth: usize,
    mode: ReadoutMode,
    hyper: &ClHyper,
) -> R {
    let m = train.num_users();
    let a = dense_adjacency::<R>(train);
    let e0: Mat<R> = weights.iter().map(|r| r.iter().map(|&x| R::c(x)).collect()).collect();
    let ls = layers(&a, e0, depth);
    let out = readout(&ls, mode);
    let mut total = bpr(&out, m, triples);
    if let Some(s) = scheme_ {
        total = total + R::c(hyper.lambda1) * scheme(&ls, m, triples, s, hyper.tau, hyper.alpha);
    }
    let touched = uniq(triples.iter().flat_map(|t| [t.user as usize, m + t.pos as usize, m + t.neg as usize]).collect());
    let mut reg = R::c(0.0);
    for n in touched {
        reg = reg + dot(&ls[0][n], &ls[0][n]);
    }
    total + R::c(hyper.lambda2) * reg
}
