//! Training runs: parallel evaluation, checkpointing, history and reports.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use layercl_core::data::SplitDataset;
use layercl_core::eval::{
    aggregate, eval_users, evaluate_user, group_results, sparsity_groups, EvalResult, EvalScratch, Phase, UserMetrics,
    DEFAULT_KS,
};
use layercl_core::model::ScoringTable;
use layercl_core::trainer::{Clock, EpochRecord, TrainHistory, TrainState, Trainer};
use layercl_core::{EmbeddingTable, PropagationOperator, Scalar};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::{self, Prepared};
use crate::report::{group_records, records, write_both, MetricRecord};

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const HISTORY: &str = "history.jsonl";
pub const CONFIG: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report";

pub fn thread_pool(workers: usize) -> Result<ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

/// Wall clock measured from construction.
pub struct Wall(Instant);

impl Default for Wall {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for Wall {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Per-user metrics computed on `pool`. The output order follows `users`
/// regardless of the worker count.
pub fn evaluate_parallel(
    pool: &ThreadPool,
    scoring: &ScoringTable,
    split: &SplitDataset,
    phase: Phase,
    users: &[u32],
    ks: &[usize],
) -> Vec<UserMetrics> {
    pool.install(|| {
        users
            .par_chunks(64)
            .map(|chunk| {
                let mut scratch = EvalScratch::default();
                chunk.iter().filter_map(|&u| evaluate_user(scoring, split, phase, u, ks, &mut scratch)).collect::<Vec<_>>()
            })
            .flatten_iter()
            .collect()
    })
}

/// Hash of the settings that determine a run's numbers (worker count excluded).
pub fn config_hash(cfg: &RunConfig) -> [u8; 32] {
    let canonical = RunConfig { workers: 1, ..cfg.clone() }.to_toml();
    Sha256::digest(canonical.as_bytes()).into()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub dataset_fingerprint: String,
    pub artifact_version: String,
    pub files: Vec<(String, String)>,
}

pub fn artifact_version() -> String {
    format!("{}-{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

#[derive(Serialize)]
struct HistoryLine<'a> {
    epoch: usize,
    loss: f64,
    bpr: f64,
    cl: f64,
    reg: f64,
    seconds: f64,
    valid_ndcg10: Option<f64>,
    scheme: &'a str,
}

fn history_line(r: &EpochRecord, scheme: &str) -> String {
    let line = HistoryLine {
        epoch: r.epoch,
        loss: r.loss,
        bpr: r.bpr,
        cl: r.cl,
        reg: r.reg,
        seconds: r.seconds,
        valid_ndcg10: r.valid_ndcg10,
        scheme,
    };
    serde_json::to_string(&line).expect("history serializes") + "\n"
}

/// Writes via a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Results of one training run, evaluated at the best validation epoch.
#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub config: RunConfig,
    pub best: EmbeddingTable<T>,
    pub history: TrainHistory,
    pub valid: EvalResult,
    pub test: EvalResult,
    /// Test metrics per sparsity group, when the groups could be formed
    pub groups: Option<Vec<EvalResult>>,
    pub seconds: f64,
}

impl<T> RunOutput<T> {
    pub fn records(&self, label: &str) -> Vec<MetricRecord> {
        let mut out = records(label, "valid", "", &self.valid);
        out.extend(records(label, "test", "", &self.test));
        if let Some(g) = &self.groups {
            out.extend(group_records(label, "test", g));
        }
        out
    }
}

/// Where a run writes its files, if anywhere.
#[derive(Debug, Clone, Default)]
pub struct RunDir {
    pub dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub resume: bool,
}

/// Evaluates `table` on both phases plus test sparsity groups.
pub fn evaluate_table<T: Scalar>(
    pool: &ThreadPool,
    trainer: &Trainer<'_>,
    split: &SplitDataset,
    table: &EmbeddingTable<T>,
    groups: usize,
) -> Result<(EvalResult, EvalResult, Option<Vec<EvalResult>>)> {
    let scoring = trainer.scoring(table)?;
    let valid_users = eval_users(split, Phase::Valid);
    let valid = aggregate(&evaluate_parallel(pool, &scoring, split, Phase::Valid, &valid_users, &DEFAULT_KS), &DEFAULT_KS);
    let test_users = eval_users(split, Phase::Test);
    let per_user = evaluate_parallel(pool, &scoring, split, Phase::Test, &test_users, &DEFAULT_KS);
    let test = aggregate(&per_user, &DEFAULT_KS);
    let groups = sparsity_groups(&split.train, &test_users, groups).ok().map(|g| group_results(&per_user, &g, &DEFAULT_KS));
    Ok((valid, test, groups))
}

/// Trains one configuration. With a run directory the config, manifest,
/// history, checkpoint and report are written there.
pub fn train_run<T: Scalar>(
    cfg: &RunConfig,
    data: &Prepared,
    op: &PropagationOperator,
    pool: &ThreadPool,
    out: &RunDir,
) -> Result<RunOutput<T>> {
    let mut clock = Wall::default();
    let tc = cfg.train_config();
    let split = &data.split;
    let mut trainer = Trainer::with_operator(tc.clone(), split, op.clone())?;
    let hash = config_hash(cfg);
    let scheme = cfg.scheme.clone();

    let ckpt_path = out.dir.as_ref().map(|d| d.join(CHECKPOINT));
    let mut state = match (&ckpt_path, out.resume) {
        (Some(p), true) if p.exists() => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let (header, state) = checkpoint::decode::<T>(&bytes)?;
            if header.config_hash != hash {
                bail!("{} was written with a different configuration", p.display());
            }
            state
        }
        _ => TrainState::<T>::new(&tc, split)?,
    };

    let mut history_file: Option<File> = None;
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(CONFIG), cfg.to_toml())?;
        let fingerprint = match &out.data_dir {
            Some(d) => dataset::fingerprint(d)?,
            None => String::new(),
        };
        let manifest = RunManifest {
            config: cfg.clone(),
            dataset_fingerprint: fingerprint,
            artifact_version: artifact_version(),
            files: [
                (CONFIG, "resolved configuration, reusable with --config"),
                (MANIFEST, "this file"),
                (HISTORY, "one JSON record per epoch"),
                (CHECKPOINT, "binary training state for --resume and eval/export"),
                ("report.json", "metric records"),
                ("report.csv", "metric records"),
            ]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        let path = dir.join(HISTORY);
        let f = OpenOptions::new().create(true).append(true).open(&path)?;
        if state.epoch == 0 {
            f.set_len(0)?;
        }
        history_file = Some(f);
    }

    let mut validate = |scoring: &ScoringTable| -> layercl_core::Result<f64> {
        let users = eval_users(split, Phase::Valid);
        Ok(aggregate(&evaluate_parallel(pool, scoring, split, Phase::Valid, &users, &[10]), &[10]).ndcg[0])
    };
    let mut io_error: Option<anyhow::Error> = None;
    let mut on_epoch = |r: &EpochRecord, s: &TrainState<T>| -> layercl_core::Result<()> {
        if io_error.is_some() {
            return Ok(());
        }
        if let Some(f) = history_file.as_mut() {
            if let Err(e) = f.write_all(history_line(r, &scheme).as_bytes()) {
                io_error = Some(e.into());
            }
        }
        if let Some(p) = &ckpt_path {
            if let Err(e) = write_atomic(p, &checkpoint::encode(s, hash)) {
                io_error = Some(e);
            }
        }
        Ok(())
    };
    trainer.fit(&mut state, &mut validate, &mut clock, &mut on_epoch)?;
    if let Some(e) = io_error {
        return Err(e);
    }
    if let Some(p) = &ckpt_path {
        write_atomic(p, &checkpoint::encode(&state, hash))?;
    }

    let (valid, test, groups) = evaluate_table(pool, &trainer, split, &state.best, cfg.groups)?;
    let output = RunOutput {
        config: cfg.clone(),
        best: state.best,
        history: state.history,
        valid,
        test,
        groups,
        seconds: clock.now(),
    };
    if let Some(dir) = &out.dir {
        write_both(dir, REPORT, &output.records(&cfg.scheme))?;
    }
    Ok(output)
}
