//! Ranking and contrastive objectives with hand-derived gradients.
//!
//! Every loss returns its value together with a [`RowGrads`] addressing the
//! exact matrices it read: BPR reads the readout, contrastive terms read
//! individual layer outputs. Values are summed over the batch, not averaged.

mod bpr;
mod contrast;
mod infonce;
mod total;

use alloc::format;

pub use bpr::bpr_loss;
pub use contrast::{
    check_train_edges, cl_heterogeneous, cl_homogeneous, one_hop_cl, scheme_loss, unique_items,
    unique_users, Side,
};
pub use infonce::{cosine_sim, infonce, log_softmax_nll, InfoNceOutput, COSINE_EPS};
pub use total::{total_loss, TotalLoss};

use crate::error::{Error, Result};
use crate::grad::RowGrads;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: RowGrads,
}

/// The five layer-pair contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContrastScheme {
    /// user layer 0 vs item layer 0
    U0I0,
    /// user layer 1 vs item layer 1
    U1I1,
    /// one-hop: layer 0 of a node vs layer 1 of its neighbor, both sides
    U0I1,
    /// user layer 0 vs user layer 2 (and the item analogue)
    U0U2,
    /// layer 0 vs the mean of layers 1..=3 of the same node
    U0SumU123,
}

impl ContrastScheme {
    pub const ALL: [ContrastScheme; 5] = [
        ContrastScheme::U0I0,
        ContrastScheme::U1I1,
        ContrastScheme::U0I1,
        ContrastScheme::U0U2,
        ContrastScheme::U0SumU123,
    ];

    /// Deepest layer the contrast reads.
    pub fn required_depth(self) -> usize {
        match self {
            ContrastScheme::U0I0 => 0,
            ContrastScheme::U1I1 | ContrastScheme::U0I1 => 1,
            ContrastScheme::U0U2 => 2,
            ContrastScheme::U0SumU123 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContrastScheme::U0I0 => "U0_I0",
            ContrastScheme::U1I1 => "U1_I1",
            ContrastScheme::U0I1 => "U0_I1",
            ContrastScheme::U0U2 => "U0_U2",
            ContrastScheme::U0SumU123 => "U0_SumU123",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument {
                name: "scheme",
                reason: format!("unknown scheme `{s}` (expected U0_I0, U1_I1, U0_I1, U0_U2 or U0_SumU123)"),
            })
    }
}

impl core::fmt::Display for ContrastScheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss weights and contrastive temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClHyper {
    /// InfoNCE temperature
    pub tau: f64,
    /// weight of the user-side term; the item side gets `1 - alpha`
    pub alpha: f64,
    /// contrastive loss weight
    pub lambda1: f64,
    /// L2 weight on the layer-0 rows touched by the batch
    pub lambda2: f64,
}

impl Default for ClHyper {
    fn default() -> Self {
        Self { tau: 0.1, alpha: 0.5, lambda1: 0.05, lambda2: 1e-4 }
    }
}

impl ClHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, v: f64, rule: &str| Error::InvalidArgument {
            name,
            reason: format!("{v} {rule}"),
        };
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(bad("tau", self.tau, "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(bad("alpha", self.alpha, "must lie in [0, 1]"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(bad("lambda1", self.lambda1, "must be non-negative"));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(bad("lambda2", self.lambda2, "must be non-negative"));
        }
        Ok(())
    }
}
