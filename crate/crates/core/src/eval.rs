//! All-rank evaluation and sparsity-group analysis.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{InteractionSet, SplitDataset};
use crate::error::{Error, Result};
use crate::math::{log2f, pairwise_sum};
use crate::model::{top_k, ScoringTable};

/// Cutoffs reported by default.
pub const DEFAULT_KS: [usize; 3] = [10, 20, 50];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Valid,
    Test,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Valid => "valid",
            Phase::Test => "test",
        }
    }
}

/// Fraction of `relevant` (sorted) found in the first `k` of `ranked`.
pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    debug_assert!(k >= 1 && !relevant.is_empty());
    let hits = ranked.iter().take(k).filter(|i| relevant.binary_search(i).is_ok()).count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with a `1 / log2(p + 1)` discount at 1-based `p`.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    debug_assert!(k >= 1 && !relevant.is_empty());
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(p, _)| 1.0 / log2f(p as f64 + 2.0))
        .sum();
    let ideal: f64 = (0..k.min(relevant.len())).map(|p| 1.0 / log2f(p as f64 + 2.0)).sum();
    dcg / ideal
}

/// Metrics of one user, aligned with the `ks` they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: u32,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

/// Macro-averaged metrics over the users with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub num_users_evaluated: usize,
}

impl EvalResult {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }
}

/// Reusable buffers for [`evaluate_user`].
#[derive(Debug, Default, Clone)]
pub struct EvalScratch {
    scores: Vec<f64>,
    excluded: Vec<bool>,
}

fn ground_truth(split: &SplitDataset, phase: Phase, u: u32) -> &[u32] {
    match phase {
        Phase::Valid => split.valid.items_of(u),
        Phase::Test => split.test.items_of(u),
    }
}

/// Users with at least one ground-truth item in `phase`, ascending.
pub fn eval_users(split: &SplitDataset, phase: Phase) -> Vec<u32> {
    (0..split.num_users() as u32).filter(|&u| !ground_truth(split, phase, u).is_empty()).collect()
}

/// Ranks every item the user has not interacted with and scores the top
/// `max(ks)`. Training items are masked, and validation items too in the test
/// phase. Returns `None` for users without ground truth.
pub fn evaluate_user(
    scoring: &ScoringTable,
    split: &SplitDataset,
    phase: Phase,
    u: u32,
    ks: &[usize],
    scratch: &mut EvalScratch,
) -> Option<UserMetrics> {
    let truth = ground_truth(split, phase, u);
    if truth.is_empty() {
        return None;
    }
    let n = scoring.num_items();
    scratch.excluded.clear();
    scratch.excluded.resize(n, false);
    for &i in split.train.items_of(u) {
        scratch.excluded[i as usize] = true;
    }
    if phase == Phase::Test {
        for &i in split.valid.items_of(u) {
            scratch.excluded[i as usize] = true;
        }
    }
    scoring.scores_into(u, &mut scratch.scores);
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let ranked = top_k(&scratch.scores, &scratch.excluded, kmax);
    debug_assert!(ranked.iter().all(|&i| !scratch.excluded[i as usize]));
    Some(UserMetrics {
        user: u,
        recall: ks.iter().map(|&k| recall_at_k(&ranked, truth, k)).collect(),
        ndcg: ks.iter().map(|&k| ndcg_at_k(&ranked, truth, k)).collect(),
    })
}

/// Macro average of per-user metrics. Users are summed in id order with
/// pairwise summation, so the result does not depend on input order.
pub fn aggregate(per_user: &[UserMetrics], ks: &[usize]) -> EvalResult {
    let mut sorted: Vec<&UserMetrics> = per_user.iter().collect();
    sorted.sort_by_key(|m| m.user);
    let n = sorted.len();
    let mean = |f: &dyn Fn(&UserMetrics) -> f64| {
        if n == 0 {
            return 0.0;
        }
        let v: Vec<f64> = sorted.iter().map(|m| f(m)).collect();
        pairwise_sum(&v) / n as f64
    };
    EvalResult {
        ks: ks.to_vec(),
        recall: (0..ks.len()).map(|j| mean(&|m| m.recall[j])).collect(),
        ndcg: (0..ks.len()).map(|j| mean(&|m| m.ndcg[j])).collect(),
        num_users_evaluated: n,
    }
}

/// Per-user metrics for `users`, skipping users without ground truth.
pub fn evaluate_users(
    scoring: &ScoringTable,
    split: &SplitDataset,
    phase: Phase,
    users: &[u32],
    ks: &[usize],
) -> Vec<UserMetrics> {
    let mut scratch = EvalScratch::default();
    users.iter().filter_map(|&u| evaluate_user(scoring, split, phase, u, ks, &mut scratch)).collect()
}

/// Serial all-rank evaluation of one phase.
pub fn evaluate(scoring: &ScoringTable, split: &SplitDataset, phase: Phase, ks: &[usize]) -> Result<EvalResult> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument { name: "ks", reason: "cutoffs must be non-empty and at least 1".into() });
    }
    let users: Vec<u32> = (0..split.num_users() as u32).collect();
    Ok(aggregate(&evaluate_users(scoring, split, phase, &users, ks), ks))
}

/// Users partitioned by training degree, sparsest group first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityGroups {
    pub groups: Vec<Vec<u32>>,
    /// Training interactions held by each group
    pub interactions: Vec<usize>,
}

/// Greedy sweep over `users` sorted by ascending degree (ties by id); a group
/// closes as soon as its interaction count reaches `total / groups`. May
/// produce fewer than `groups` groups.
pub fn greedy_groups(train: &InteractionSet, users: &[u32], groups: usize) -> SparsityGroups {
    let mut order = users.to_vec();
    order.sort_by_key(|&u| (train.degree(u), u));
    order.dedup();
    let total: usize = order.iter().map(|&u| train.degree(u)).sum();
    let target = total as f64 / groups.max(1) as f64;
    let mut out = SparsityGroups { groups: Vec::new(), interactions: Vec::new() };
    let mut current = Vec::new();
    let mut count = 0usize;
    for u in order {
        current.push(u);
        count += train.degree(u);
        if count as f64 >= target && out.groups.len() + 1 < groups {
            out.groups.push(core::mem::take(&mut current));
            out.interactions.push(count);
            count = 0;
        }
    }
    if !current.is_empty() {
        out.groups.push(current);
        out.interactions.push(count);
    }
    out
}

/// [`greedy_groups`] that insists on exactly `groups` non-empty groups.
pub fn sparsity_groups(train: &InteractionSet, users: &[u32], groups: usize) -> Result<SparsityGroups> {
    if groups == 0 {
        return Err(Error::InvalidArgument { name: "groups", reason: "must be at least 1".into() });
    }
    let g = greedy_groups(train, users, groups);
    if g.groups.len() < groups {
        return Err(Error::TooFewGroups { requested: groups, formed: g.groups.len() });
    }
    Ok(g)
}

/// Aggregates `per_user` separately for each group.
pub fn group_results(per_user: &[UserMetrics], groups: &SparsityGroups, ks: &[usize]) -> Vec<EvalResult> {
    let mut slot = vec![usize::MAX; per_user.iter().map(|m| m.user as usize + 1).max().unwrap_or(0)];
    for (gi, g) in groups.groups.iter().enumerate() {
        for &u in g {
            if let Some(s) = slot.get_mut(u as usize) {
                *s = gi;
            }
        }
    }
    let mut buckets: Vec<Vec<UserMetrics>> = vec![Vec::new(); groups.groups.len()];
    for m in per_user {
        if let Some(&gi) = slot.get(m.user as usize).filter(|&&g| g != usize::MAX) {
            buckets[gi].push(m.clone());
        }
    }
    buckets.iter().map(|b| aggregate(b, ks)).collect()
}
