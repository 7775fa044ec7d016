use alloc::vec;

use super::LossOutput;
use crate::data::TrainBatch;
use crate::grad::{MatrixId, RowGrads};
use crate::math::{dot, neg_log_sigmoid, pairwise_sum, sigmoid};
use crate::model::LayerStack;
use crate::scalar::Scalar;

/// `-sum ln σ(e_u·e_pos - e_u·e_neg)` over the batch, on the readout.
///
/// With `s = σ(neg - pos)` the per-triple gradients are `-s (e_pos - e_neg)`
/// for the user, `-s e_u` for the positive and `+s e_u` for the negative.
pub fn bpr_loss<T: Scalar>(stack: &LayerStack<T>, batch: &TrainBatch) -> LossOutput {
    let d = stack.readout.cols();
    let mut grad = RowGrads::new(d);
    let mut terms = vec![0.0; batch.len()];
    let (mut eu, mut ep, mut en) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut diff = vec![0.0; d];
    for (t, term) in batch.triples.iter().zip(terms.iter_mut()) {
        let (nu, np, nn) = (stack.user_node(t.user), stack.item_node(t.pos), stack.item_node(t.neg));
        stack.readout.row_f64_into(nu, &mut eu);
        stack.readout.row_f64_into(np, &mut ep);
        stack.readout.row_f64_into(nn, &mut en);
        let margin = dot(&eu, &ep) - dot(&eu, &en);
        *term = neg_log_sigmoid(margin);
        let s = sigmoid(-margin);
        for k in 0..d {
            diff[k] = ep[k] - en[k];
        }
        grad.add_scaled(MatrixId::Readout, nu as u32, -s, &diff);
        grad.add_scaled(MatrixId::Readout, np as u32, -s, &eu);
        grad.add_scaled(MatrixId::Readout, nn as u32, s, &eu);
    }
    LossOutput { value: pairwise_sum(&terms), grad }
}
