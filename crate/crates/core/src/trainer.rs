//! Training loop with early stopping on validation NDCG@10.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{NegativeSampler, SplitDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Phase};
use crate::graph::PropagationOperator;
use crate::losses::{total_loss, ClHyper, ContrastScheme};
use crate::model::{forward, EmbeddingTable, ReadoutMode, ScoringTable};
use crate::optim::{AdamState, Backward};
use crate::scalar::Scalar;

/// Depth of the LightGCN baseline when no scheme fixes it.
pub const BASELINE_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// `None` trains plain LightGCN with BPR only
    pub scheme: Option<ContrastScheme>,
    /// Propagation depth; defaults to the scheme's required depth
    pub layers: Option<usize>,
    pub dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hyper: ClHyper,
    pub patience: usize,
    pub eval_every: usize,
    pub max_epochs: usize,
    pub init_seed: u64,
    pub sample_seed: u64,
    pub readout: ReadoutMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scheme: Some(ContrastScheme::U0I1),
            layers: None,
            dim: 64,
            lr: 1e-3,
            batch_size: 4096,
            hyper: ClHyper::default(),
            patience: 10,
            eval_every: 1,
            max_epochs: 300,
            init_seed: 2024,
            sample_seed: 2025,
            readout: ReadoutMode::Mean,
        }
    }
}

impl TrainConfig {
    /// Contrast scheme actually optimized: none when `lambda1` is zero.
    pub fn active_scheme(&self) -> Option<ContrastScheme> {
        self.scheme.filter(|_| self.hyper.lambda1 != 0.0)
    }

    pub fn depth(&self) -> usize {
        match (self.layers, self.scheme) {
            (Some(l), _) => l,
            (None, Some(s)) => s.required_depth(),
            (None, None) => BASELINE_DEPTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| Err(Error::InvalidArgument { name, reason: reason.into() });
        if self.dim == 0 {
            return bad("dim", "must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive and finite");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be positive");
        }
        if self.patience == 0 {
            return bad("patience", "must be positive");
        }
        self.hyper.validate()?;
        if let Some(s) = self.active_scheme() {
            if s.required_depth() > self.depth() {
                return Err(Error::InsufficientDepth {
                    scheme: s.name(),
                    required: s.required_depth(),
                    available: self.depth(),
                });
            }
        }
        Ok(())
    }
}

/// Losses of one epoch, averaged over its batches.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub bpr: f64,
    pub cl: f64,
    pub reg: f64,
    pub seconds: f64,
    pub valid_ndcg10: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stop: Option<StopReason>,
}

/// Patience counter over successive validation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStop {
    pub patience: usize,
    pub best: Option<(usize, f64)>,
    pub since_best: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, since_best: 0 }
    }

    /// Records a score. Returns `true` when training should stop. Only a
    /// strict improvement resets the counter, so ties keep the earliest epoch.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        match self.best {
            Some((_, b)) if !(metric > b) => self.since_best += 1,
            _ => {
                self.best = Some((epoch, metric));
                self.since_best = 0;
            }
        }
        self.since_best >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }
}

/// Replays `(epoch, metric)` records through [`EarlyStop`]. Returns whether the
/// rule fired and the best epoch so far.
pub fn early_stop(records: &[(usize, f64)], patience: usize) -> (bool, Option<usize>) {
    let mut rule = EarlyStop::new(patience);
    let mut stop = false;
    for &(e, m) in records {
        stop = rule.observe(e, m);
        if stop {
            break;
        }
    }
    (stop, rule.best_epoch())
}

/// Source of wall time in seconds.
pub trait Clock {
    fn now(&mut self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&mut self) -> f64 {
        0.0
    }
}

/// Everything needed to continue an interrupted run.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub table: EmbeddingTable<T>,
    pub adam: AdamState<T>,
    pub rng: ChaCha8Rng,
    /// Epochs completed so far
    pub epoch: usize,
    pub stopper: EarlyStop,
    pub best: EmbeddingTable<T>,
    pub history: TrainHistory,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: &TrainConfig, split: &SplitDataset) -> Result<Self> {
        cfg.validate()?;
        let table = EmbeddingTable::<f64>::xavier(split.num_users(), split.num_items(), cfg.dim, cfg.init_seed)?;
        let table = EmbeddingTable {
            num_users: table.num_users,
            num_items: table.num_items,
            weights: table.weights.cast(),
            init_seed: table.init_seed,
        };
        let adam = AdamState::new(table.num_nodes(), cfg.dim, cfg.lr);
        Ok(Self {
            best: table.clone(),
            table,
            adam,
            rng: ChaCha8Rng::seed_from_u64(cfg.sample_seed),
            epoch: 0,
            stopper: EarlyStop::new(cfg.patience),
            history: TrainHistory::default(),
        })
    }

    pub fn finished(&self) -> bool {
        self.history.stop.is_some()
    }
}

/// Scores the current table on validation and returns NDCG@10.
pub type Validator<'v> = dyn FnMut(&ScoringTable) -> Result<f64> + 'v;

/// Serial validation NDCG@10.
pub fn serial_validator(split: &SplitDataset) -> impl FnMut(&ScoringTable) -> Result<f64> + '_ {
    move |scoring| Ok(evaluate(scoring, split, Phase::Valid, &[10])?.ndcg[0])
}

/// Holds the per-run constants: operator, sampler and scratch buffers.
pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    split: &'a SplitDataset,
    op: PropagationOperator,
    sampler: NegativeSampler<'a>,
    workspace: Backward,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, split: &'a SplitDataset) -> Result<Self> {
        cfg.validate()?;
        let op = PropagationOperator::from_train(&split.train);
        Self::with_operator(cfg, split, op)
    }

    /// Reuses a prebuilt operator, which must come from `split.train`.
    pub fn with_operator(cfg: TrainConfig, split: &'a SplitDataset, op: PropagationOperator) -> Result<Self> {
        cfg.validate()?;
        if op.num_nodes() != split.num_users() + split.num_items() {
            return Err(Error::Shape {
                what: "propagation operator",
                expected: split.num_users() + split.num_items(),
                got: op.num_nodes(),
            });
        }
        let sampler = NegativeSampler::new(&split.train)?;
        let workspace = Backward::new(op.num_nodes(), cfg.dim);
        Ok(Self { cfg, split, op, sampler, workspace })
    }

    pub fn operator(&self) -> &PropagationOperator {
        &self.op
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.split.train.len().div_ceil(self.cfg.batch_size)
    }

    /// One epoch of resampled batches. Returns the averaged losses; the
    /// record's epoch number is the index of this epoch.
    pub fn run_epoch<T: Scalar>(&mut self, state: &mut TrainState<T>) -> Result<EpochRecord> {
        let depth = self.cfg.depth();
        let scheme = self.cfg.active_scheme();
        let batches = self.batches_per_epoch();
        let (mut loss, mut bpr, mut cl, mut reg) = (0.0, 0.0, 0.0, 0.0);
        for b in 0..batches {
            let batch = self.sampler.sample(self.cfg.batch_size, &mut state.rng);
            let stack = forward(&state.table, &self.op, depth, self.cfg.readout)?;
            let out = total_loss(&stack, &batch, scheme, &self.cfg.hyper)?;
            if !out.value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: state.epoch, batch: b, bpr: out.bpr, cl: out.cl, reg: out.reg });
            }
            let grads = self.workspace.run(&self.op, depth, self.cfg.readout, &out.grad);
            state.adam.step(&mut state.table.weights, &grads)?;
            loss += out.value;
            bpr += out.bpr;
            cl += out.cl;
            reg += out.reg;
        }
        let n = batches.max(1) as f64;
        Ok(EpochRecord {
            epoch: state.epoch,
            loss: loss / n,
            bpr: bpr / n,
            cl: cl / n,
            reg: reg / n,
            seconds: 0.0,
            valid_ndcg10: None,
        })
    }

    pub fn scoring<T: Scalar>(&self, table: &EmbeddingTable<T>) -> Result<ScoringTable> {
        let stack = forward(table, &self.op, self.cfg.depth(), self.cfg.readout)?;
        Ok(ScoringTable::from_readout(&stack.readout, table.num_users))
    }

    /// Trains one epoch, validates when due and updates the stopping state.
    /// Returns the logged record.
    pub fn step<T: Scalar>(
        &mut self,
        state: &mut TrainState<T>,
        validate: &mut Validator<'_>,
        clock: &mut dyn Clock,
    ) -> Result<EpochRecord> {
        let start = clock.now();
        let mut record = self.run_epoch(state)?;
        record.seconds = clock.now() - start;
        let epoch = state.epoch;
        state.epoch += 1;
        let last = state.epoch >= self.cfg.max_epochs;
        let due = state.epoch % self.cfg.eval_every == 0 || last;
        let mut stop = false;
        if due {
            let metric = validate(&self.scoring(&state.table)?)?;
            record.valid_ndcg10 = Some(metric);
            stop = state.stopper.observe(epoch, metric);
            if state.stopper.best_epoch() == Some(epoch) {
                state.best = state.table.clone();
            }
            state.history.best_epoch = state.stopper.best_epoch();
        }
        state.history.epochs.push(record.clone());
        if stop {
            state.history.stop = Some(StopReason::EarlyStop);
        } else if last {
            state.history.stop = Some(StopReason::MaxEpochs);
        }
        Ok(record)
    }

    /// Runs until early stopping or `max_epochs`, calling `on_epoch` after
    /// every epoch.
    pub fn fit<T: Scalar>(
        &mut self,
        state: &mut TrainState<T>,
        validate: &mut Validator<'_>,
        clock: &mut dyn Clock,
        on_epoch: &mut dyn FnMut(&EpochRecord, &TrainState<T>) -> Result<()>,
    ) -> Result<()> {
        if self.cfg.max_epochs == 0 {
            state.history.stop = Some(StopReason::MaxEpochs);
        }
        while !state.finished() {
            let record = self.step(state, validate, clock)?;
            on_epoch(&record, state)?;
        }
        Ok(())
    }
}

/// Trains from scratch and returns the table of the best validation epoch.
pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    split: &SplitDataset,
    validate: &mut Validator<'_>,
    clock: &mut dyn Clock,
) -> Result<(EmbeddingTable<T>, TrainHistory)> {
    let mut trainer = Trainer::new(cfg.clone(), split)?;
    let mut state = TrainState::<T>::new(cfg, split)?;
    trainer.fit(&mut state, validate, clock, &mut |_, _| Ok(()))?;
    Ok((state.best, state.history))
}

/// Short human-readable description of a configuration.
pub fn describe(cfg: &TrainConfig) -> String {
    let scheme = cfg.active_scheme().map_or("LightGCN", |s| s.name());
    alloc::format!("{scheme} L={} d={} B={} lr={}", cfg.depth(), cfg.dim, cfg.batch_size, cfg.lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_metric_stops_at_eleventh_eval() {
        let records: Vec<(usize, f64)> = (1..=11).map(|e| (e, 0.2)).collect();
        assert_eq!(early_stop(&records, 10), (true, Some(1)));
        assert_eq!(early_stop(&records[..10], 10), (false, Some(1)));
    }

    #[test]
    fn ties_keep_the_first_peak() {
        let mut seq = alloc::vec![0.10, 0.12, 0.11, 0.12];
        seq.extend([0.11; 9]);
        let records: Vec<(usize, f64)> = seq.iter().copied().enumerate().collect();
        // the second .12 is not strictly better, so 11 stale evals follow epoch 1
        let (stop, best) = early_stop(&records, 10);
        assert!(stop);
        assert_eq!(best, Some(1));
        let mut rule = EarlyStop::new(10);
        let fired = records.iter().position(|&(e, m)| rule.observe(e, m));
        assert_eq!(fired, Some(11));
    }

    #[test]
    fn improving_metric_never_stops() {
        let records: Vec<(usize, f64)> = (0..100).map(|e| (e, e as f64)).collect();
        assert_eq!(early_stop(&records, 10), (false, Some(99)));
    }

    #[test]
    fn depth_follows_scheme() {
        let mut cfg = TrainConfig { scheme: Some(ContrastScheme::U0U2), ..Default::default() };
        assert_eq!(cfg.depth(), 2);
        cfg.layers = Some(1);
        assert!(matches!(cfg.validate(), Err(Error::InsufficientDepth { required: 2, .. })));
        cfg.hyper.lambda1 = 0.0;
        assert!(cfg.validate().is_ok());
        cfg.scheme = None;
        cfg.layers = None;
        assert_eq!(cfg.depth(), BASELINE_DEPTH);
    }
}
