use alloc::vec::Vec;

use super::contrast::scheme_loss;
use super::{bpr_loss, ClHyper, ContrastScheme, LossOutput};
use crate::data::TrainBatch;
use crate::error::Result;
use crate::grad::{MatrixId, RowGrads};
use crate::math::{dot, pairwise_sum};
use crate::model::LayerStack;
use crate::scalar::Scalar;

/// Joint objective with its components kept apart for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub value: f64,
    pub bpr: f64,
    /// unweighted contrastive loss (0 when disabled)
    pub cl: f64,
    /// unweighted squared norm of the regularized rows
    pub reg: f64,
    pub grad: RowGrads,
}

impl TotalLoss {
    pub fn into_output(self) -> LossOutput {
        LossOutput { value: self.value, grad: self.grad }
    }
}

/// Layer-0 nodes touched by a batch (users, positives, negatives), each once.
fn touched_nodes<T: Scalar>(stack: &LayerStack<T>, batch: &TrainBatch) -> Vec<u32> {
    let mut nodes: Vec<u32> = Vec::with_capacity(3 * batch.len());
    for t in &batch.triples {
        nodes.push(stack.user_node(t.user) as u32);
        nodes.push(stack.item_node(t.pos) as u32);
        nodes.push(stack.item_node(t.neg) as u32);
    }
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// `BPR + lambda1 * CL + lambda2 * sum ||e0||^2` over the layer-0 rows the
/// batch touches. The contrastive term is skipped when `scheme` is `None` or
/// `lambda1` is zero.
pub fn total_loss<T: Scalar>(
    stack: &LayerStack<T>,
    batch: &TrainBatch,
    scheme: Option<ContrastScheme>,
    hyper: &ClHyper,
) -> Result<TotalLoss> {
    let d = stack.readout.cols();
    let LossOutput { value: bpr, mut grad } = bpr_loss(stack, batch);

    let mut cl = 0.0;
    if let Some(scheme) = scheme.filter(|_| hyper.lambda1 != 0.0) {
        let out = scheme_loss(scheme, stack, &batch.pairs(), hyper.tau, hyper.alpha)?;
        cl = out.value;
        grad.merge_scaled(&out.grad, hyper.lambda1);
    }

    let mut reg = 0.0;
    if hyper.lambda2 != 0.0 {
        let layer0 = &stack.layers[0];
        let mut row = alloc::vec![0.0; d];
        let mut norms = Vec::new();
        for node in touched_nodes(stack, batch) {
            layer0.row_f64_into(node as usize, &mut row);
            norms.push(dot(&row, &row));
            grad.add_scaled(MatrixId::Layer(0), node, 2.0 * hyper.lambda2, &row);
        }
        reg = pairwise_sum(&norms);
    }

    let value = bpr + hyper.lambda1 * cl + hyper.lambda2 * reg;
    Ok(TotalLoss { value, bpr, cl, reg, grad })
}
