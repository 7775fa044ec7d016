//! Layer-to-layer contrasts between nodes of the same batch.
//!
//! Candidates for the InfoNCE denominator are the unique users (or items) of
//! the current batch, the positive included.

use alloc::vec::Vec;

use super::infonce::infonce;
use super::{ContrastScheme, LossOutput};
use crate::data::InteractionSet;
use crate::error::{Error, Result};
use crate::grad::{MatrixId, RowGrads};
use crate::matrix::Matrix;
use crate::model::LayerStack;
use crate::scalar::Scalar;

/// Which side's nodes populate the candidate set.
///
/// For a heterogeneous contrast `Side::User` anchors on the item of each
/// edge and uses the connected user as positive among the batch users;
/// `Side::Item` mirrors it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

impl Side {
    fn other(self) -> Side {
        match self {
            Side::User => Side::Item,
            Side::Item => Side::User,
        }
    }
}

/// Sorted unique users of a batch of edges.
pub fn unique_users(pairs: &[(u32, u32)]) -> Vec<u32> {
    let mut v: Vec<u32> = pairs.iter().map(|p| p.0).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Sorted unique items of a batch of edges.
pub fn unique_items(pairs: &[(u32, u32)]) -> Vec<u32> {
    let mut v: Vec<u32> = pairs.iter().map(|p| p.1).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Fails on the first pair that is not an observed training edge.
pub fn check_train_edges(pairs: &[(u32, u32)], train: &InteractionSet) -> Result<()> {
    match pairs.iter().find(|&&(u, i)| !train.contains(u, i)) {
        Some(&(user, item)) => Err(Error::NotAnEdge { user, item }),
        None => Ok(()),
    }
}

fn node_of<T: Scalar>(stack: &LayerStack<T>, side: Side, id: u32) -> usize {
    match side {
        Side::User => stack.user_node(id),
        Side::Item => stack.item_node(id),
    }
}

/// Rows of `ids` read through a view: the mean of the listed layers.
fn gather<T: Scalar>(stack: &LayerStack<T>, side: Side, ids: &[u32], view: &[usize]) -> Matrix<f64> {
    let d = stack.readout.cols();
    let scale = 1.0 / view.len() as f64;
    let mut out = Matrix::<f64>::zeros(ids.len(), d);
    for (k, &id) in ids.iter().enumerate() {
        let node = node_of(stack, side, id);
        let row = out.row_mut(k);
        for &l in view {
            for (o, v) in row.iter_mut().zip(stack.layers[l].row(node)) {
                *o += v.to_f64();
            }
        }
        if view.len() > 1 {
            row.iter_mut().for_each(|o| *o *= scale);
        }
    }
    out
}

fn scatter<T: Scalar>(
    stack: &LayerStack<T>,
    grad: &mut RowGrads,
    side: Side,
    ids: &[u32],
    view: &[usize],
    rows: &Matrix<f64>,
) {
    let scale = 1.0 / view.len() as f64;
    for (k, &id) in ids.iter().enumerate() {
        let node = node_of(stack, side, id) as u32;
        for &l in view {
            grad.add_scaled(MatrixId::Layer(l as u8), node, scale, rows.row(k));
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn contrast<T: Scalar>(
    stack: &LayerStack<T>,
    anchor_side: Side,
    anchor_ids: &[u32],
    anchor_view: &[usize],
    cand_side: Side,
    cand_ids: &[u32],
    cand_view: &[usize],
    pos_index: &[usize],
    tau: f64,
) -> Result<LossOutput> {
    let anchors = gather(stack, anchor_side, anchor_ids, anchor_view);
    let cands = gather(stack, cand_side, cand_ids, cand_view);
    let out = infonce(&anchors, &cands, pos_index, tau)?;
    let mut grad = RowGrads::new(stack.readout.cols());
    scatter(stack, &mut grad, anchor_side, anchor_ids, anchor_view, &out.anchor_grads);
    scatter(stack, &mut grad, cand_side, cand_ids, cand_view, &out.candidate_grads);
    Ok(LossOutput { value: out.value, grad })
}

fn check_depth<T: Scalar>(stack: &LayerStack<T>, what: &'static str, layers: &[usize]) -> Result<()> {
    let required = layers.iter().copied().max().unwrap_or(0);
    if required > stack.depth() {
        return Err(Error::InsufficientDepth { scheme: what, required, available: stack.depth() });
    }
    Ok(())
}

fn heterogeneous_views<T: Scalar>(
    stack: &LayerStack<T>,
    anchor_view: &[usize],
    cand_view: &[usize],
    pairs: &[(u32, u32)],
    tau: f64,
    side: Side,
) -> Result<LossOutput> {
    let (anchor_ids, positives): (Vec<u32>, Vec<u32>) = match side {
        Side::User => pairs.iter().map(|&(u, i)| (i, u)).unzip(),
        Side::Item => pairs.iter().copied().unzip(),
    };
    let mut cand_ids = positives.clone();
    cand_ids.sort_unstable();
    cand_ids.dedup();
    let pos_index: Vec<usize> =
        positives.iter().map(|p| cand_ids.binary_search(p).expect("positive is a candidate")).collect();
    contrast(stack, side.other(), &anchor_ids, anchor_view, side, &cand_ids, cand_view, &pos_index, tau)
}

fn homogeneous_views<T: Scalar>(
    stack: &LayerStack<T>,
    anchor_view: &[usize],
    cand_view: &[usize],
    nodes: &[u32],
    tau: f64,
    side: Side,
) -> Result<LossOutput> {
    let mut ids = nodes.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let pos_index: Vec<usize> = (0..ids.len()).collect();
    contrast(stack, side, &ids, anchor_view, side, &ids, cand_view, &pos_index, tau)
}

/// Contrasts layer `m` of each node against layer `n` of the same node, with
/// the other batch nodes of the same type (at layer `n`) as negatives.
/// Each distinct node anchors once.
pub fn cl_homogeneous<T: Scalar>(
    stack: &LayerStack<T>,
    m: usize,
    n: usize,
    nodes: &[u32],
    tau: f64,
    side: Side,
) -> Result<LossOutput> {
    check_depth(stack, "homogeneous", &[m, n])?;
    homogeneous_views(stack, &[m], &[n], nodes, tau, side)
}

/// Contrasts across an observed edge: with `Side::User`, each edge `(u, i)`
/// anchors on item `i` at layer `m` with user `u` at layer `n` as positive
/// and the batch users at layer `n` as candidates. Every edge is its own
/// anchor term.
pub fn cl_heterogeneous<T: Scalar>(
    stack: &LayerStack<T>,
    m: usize,
    n: usize,
    pairs: &[(u32, u32)],
    tau: f64,
    side: Side,
) -> Result<LossOutput> {
    check_depth(stack, "heterogeneous", &[m, n])?;
    heterogeneous_views(stack, &[m], &[n], pairs, tau, side)
}

fn blend(alpha: f64, user: impl FnOnce() -> Result<LossOutput>, item: impl FnOnce() -> Result<LossOutput>, dim: usize) -> Result<LossOutput> {
    let mut value = 0.0;
    let mut grad = RowGrads::new(dim);
    if alpha != 0.0 {
        let u = user()?;
        if alpha == 1.0 {
            return Ok(u);
        }
        value += alpha * u.value;
        grad.merge_scaled(&u.grad, alpha);
    }
    let beta = 1.0 - alpha;
    if beta != 0.0 {
        let i = item()?;
        if beta == 1.0 {
            return Ok(i);
        }
        value += beta * i.value;
        grad.merge_scaled(&i.grad, beta);
    }
    Ok(LossOutput { value, grad })
}

/// One-hop objective: `alpha * L_user + (1 - alpha) * L_item`, where the user
/// side anchors on each edge's item at layer 1 against users at layer 0 and
/// the item side anchors on the user at layer 1 against items at layer 0.
pub fn one_hop_cl<T: Scalar>(stack: &LayerStack<T>, pairs: &[(u32, u32)], tau: f64, alpha: f64) -> Result<LossOutput> {
    check_depth(stack, ContrastScheme::U0I1.name(), &[1])?;
    blend(
        alpha,
        || heterogeneous_views(stack, &[1], &[0], pairs, tau, Side::User),
        || heterogeneous_views(stack, &[1], &[0], pairs, tau, Side::Item),
        stack.readout.cols(),
    )
}

/// Dispatches a [`ContrastScheme`] over the observed edges of a batch.
pub fn scheme_loss<T: Scalar>(
    scheme: ContrastScheme,
    stack: &LayerStack<T>,
    pairs: &[(u32, u32)],
    tau: f64,
    alpha: f64,
) -> Result<LossOutput> {
    let required = scheme.required_depth();
    if required > stack.depth() {
        return Err(Error::InsufficientDepth { scheme: scheme.name(), required, available: stack.depth() });
    }
    let dim = stack.readout.cols();
    match scheme {
        ContrastScheme::U0I0 => heterogeneous_views(stack, &[0], &[0], pairs, tau, Side::User),
        ContrastScheme::U1I1 => heterogeneous_views(stack, &[1], &[1], pairs, tau, Side::User),
        ContrastScheme::U0I1 => one_hop_cl(stack, pairs, tau, alpha),
        ContrastScheme::U0U2 => {
            let users = unique_users(pairs);
            let items = unique_items(pairs);
            blend(
                alpha,
                || homogeneous_views(stack, &[0], &[2], &users, tau, Side::User),
                || homogeneous_views(stack, &[0], &[2], &items, tau, Side::Item),
                dim,
            )
        }
        ContrastScheme::U0SumU123 => {
            let users = unique_users(pairs);
            let items = unique_items(pairs);
            blend(
                alpha,
                || homogeneous_views(stack, &[0], &[1, 2, 3], &users, tau, Side::User),
                || homogeneous_views(stack, &[0], &[1, 2, 3], &items, tau, Side::Item),
                dim,
            )
        }
    }
}
