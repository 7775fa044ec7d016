//! Command implementations behind the `layercl` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use layercl_core::data::{ColumnSpec, Delimiter, SplitRatios};
use layercl_core::losses::ContrastScheme;
use layercl_core::model::forward;
use layercl_core::synthetic::{generate, SyntheticConfig};
use layercl_core::trainer::{Clock, TrainState, Trainer};
use layercl_core::{EmbeddingTable, Scalar};
use serde::Serialize;

use crate::checkpoint;
use crate::config::{parse_scheme, RunConfig};
use crate::dataset::{self, load_operator, FilterSettings, PrepareSettings, Prepared};
use crate::embeddings::{self, ExportFormat, ExportWhat};
use crate::report::{median_iqr, write_both, MetricRecord};
use crate::run::{self, evaluate_table, thread_pool, train_run, RunDir, Wall};

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub precision: Option<u32>,
    pub out: Option<PathBuf>,
}

impl Global {
    fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("--out is required for this command")
    }

    /// Reads `--config` and applies the command-line overrides.
    pub fn run_config(&self) -> Result<RunConfig> {
        let path = self.config.as_ref().context("--config is required for this command")?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if let Some(s) = self.seed {
            cfg.reseed(s);
        }
        if let Some(w) = self.workers {
            ensure!(w > 0, "--workers must be positive");
            cfg.workers = w;
        }
        if let Some(p) = self.precision {
            ensure!(matches!(p, 32 | 64), "--precision must be 32 or 64");
            cfg.precision = p;
        }
        Ok(cfg)
    }
}

/// Dispatches on the configured precision.
macro_rules! with_precision {
    ($bits:expr, $f:ident ( $($arg:expr),* )) => {
        match $bits {
            64 => $f::<f64>($($arg),*),
            _ => $f::<f32>($($arg),*),
        }
    };
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub clusters: usize,
}

/// Writes `ratings.tsv` (`user<TAB>item<TAB>rating`) from the generator.
pub fn synth(g: &Global, args: &SynthArgs) -> Result<PathBuf> {
    let out = g.out()?;
    let cfg = SyntheticConfig {
        num_users: args.users,
        num_items: args.items,
        interactions: args.interactions,
        clusters: args.clusters,
        seed: g.seed.unwrap_or(SyntheticConfig::default().seed),
        ..SyntheticConfig::default()
    };
    let data = generate(&cfg)?;
    let mut text = String::with_capacity(data.interactions.len() * 12);
    for (u, i) in data.interactions.pairs() {
        text.push_str(&format!("u{u}\ti{i}\t5\n"));
    }
    fs::create_dir_all(out)?;
    let path = out.join("ratings.tsv");
    fs::write(&path, text)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct PrepareArgs {
    pub input: PathBuf,
    pub delimiter: Delimiter,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: Option<usize>,
    pub skip_header: bool,
    pub threshold: Option<f64>,
    pub k_user: usize,
    pub k_item: usize,
    pub valid: f64,
    pub test: f64,
}

pub fn prepare(g: &Global, args: &PrepareArgs) -> Result<Prepared> {
    let out = g.out()?;
    let columns = ColumnSpec {
        delimiter: args.delimiter,
        user: args.user_col,
        item: args.item_col,
        rating: args.rating_col,
        timestamp: None,
        skip_header: args.skip_header,
    };
    let ratios = SplitRatios { train: 1.0 - args.valid - args.test, valid: args.valid, test: args.test };
    ratios.validate()?;
    let settings = PrepareSettings {
        columns,
        filters: FilterSettings { threshold: args.threshold, k_user: args.k_user, k_item: args.k_item },
        ratios,
        seed: g.seed.unwrap_or(0),
    };
    let prepared = dataset::prepare(&args.input, &settings)?;
    prepared.write(out)?;
    Ok(prepared)
}

fn load_data(dir: &Path) -> Result<(Prepared, layercl_core::PropagationOperator)> {
    let data = Prepared::read(dir)?;
    let op = load_operator(dir, &data.split.train);
    Ok((data, op))
}

/// Test-phase metrics of one finished run.
pub struct TrainSummary {
    pub records: Vec<MetricRecord>,
    pub best_epoch: Option<usize>,
    pub epochs: usize,
}

pub fn train(g: &Global, data_dir: &Path, resume: bool) -> Result<TrainSummary> {
    let cfg = g.run_config()?;
    let (data, op) = load_data(data_dir)?;
    let pool = thread_pool(cfg.workers)?;
    let out = RunDir { dir: Some(g.out()?.to_path_buf()), data_dir: Some(data_dir.to_path_buf()), resume };
    fn go<T: Scalar>(
        cfg: &RunConfig,
        data: &Prepared,
        op: &layercl_core::PropagationOperator,
        pool: &rayon::ThreadPool,
        out: &RunDir,
    ) -> Result<TrainSummary> {
        let r = train_run::<T>(cfg, data, op, pool, out)?;
        Ok(TrainSummary { records: r.records(&cfg.scheme), best_epoch: r.history.best_epoch, epochs: r.history.epochs.len() })
    }
    with_precision!(cfg.precision, go(&cfg, &data, &op, &pool, &out))
}

/// Re-evaluates the best table stored in a run directory.
pub fn eval(g: &Global, run_dir: &Path, data_dir: &Path) -> Result<Vec<MetricRecord>> {
    let cfg_text = fs::read_to_string(run_dir.join(run::CONFIG)).with_context(|| format!("reading {}", run_dir.display()))?;
    let mut cfg = RunConfig::parse(&cfg_text)?;
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    let bytes = fs::read(run_dir.join(run::CHECKPOINT))?;
    let header = checkpoint::read_header(&bytes)?;
    let (data, op) = load_data(data_dir)?;
    let pool = thread_pool(cfg.workers)?;
    fn go<T: Scalar>(
        cfg: &RunConfig,
        bytes: &[u8],
        data: &Prepared,
        op: &layercl_core::PropagationOperator,
        pool: &rayon::ThreadPool,
    ) -> Result<Vec<MetricRecord>> {
        let (_, state) = checkpoint::decode::<T>(bytes)?;
        let trainer = Trainer::with_operator(cfg.train_config(), &data.split, op.clone())?;
        ensure!(
            state.best.num_users == data.split.num_users() && state.best.num_items == data.split.num_items(),
            "checkpoint does not match the data directory"
        );
        let (valid, test, groups) = evaluate_table(pool, &trainer, &data.split, &state.best, cfg.groups)?;
        let mut out = crate::report::records(&cfg.scheme, "valid", "", &valid);
        out.extend(crate::report::records(&cfg.scheme, "test", "", &test));
        if let Some(gr) = groups {
            out.extend(crate::report::group_records(&cfg.scheme, "test", &gr));
        }
        Ok(out)
    }
    let records = with_precision!(header.bits, go(&cfg, &bytes, &data, &op, &pool))?;
    if let Some(out) = &g.out {
        write_both(out, "eval", &records)?;
    }
    Ok(records)
}

/// Row labels in the order the grid reports them.
pub fn grid_rows() -> Vec<Option<ContrastScheme>> {
    std::iter::once(None).chain(ContrastScheme::ALL.into_iter().map(Some)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub variant: String,
    pub layers: usize,
    pub seeds: usize,
    pub recall10: f64,
    pub ndcg10: f64,
    pub recall20: f64,
    pub ndcg20: f64,
    pub recall50: f64,
    pub ndcg50: f64,
}

impl GridRow {
    fn from_runs(variant: String, layers: usize, runs: &[layercl_core::eval::EvalResult]) -> Self {
        let mean = |f: &dyn Fn(&layercl_core::eval::EvalResult) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
        let at = |k: usize, ndcg: bool| {
            mean(&move |r: &layercl_core::eval::EvalResult| {
                if ndcg { r.ndcg_at(k).unwrap_or(f64::NAN) } else { r.recall_at(k).unwrap_or(f64::NAN) }
            })
        };
        GridRow {
            variant,
            layers,
            seeds: runs.len(),
            recall10: at(10, false),
            ndcg10: at(10, true),
            recall20: at(20, false),
            ndcg20: at(20, true),
            recall50: at(50, false),
            ndcg50: at(50, true),
        }
    }
}

/// Result of training every variant: the summary table plus every metric.
pub struct Table {
    pub rows: Vec<GridRow>,
    pub records: Vec<MetricRecord>,
}

fn run_variants(
    base: &RunConfig,
    data: &Prepared,
    op: &layercl_core::PropagationOperator,
    variants: &[(String, RunConfig)],
    seeds: &[u64],
) -> Result<Table> {
    let pool = thread_pool(base.workers)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (label, cfg) in variants {
        let mut tests = Vec::new();
        for &seed in seeds {
            let mut c = cfg.clone();
            c.reseed(seed);
            fn go<T: Scalar>(
                c: &RunConfig,
                data: &Prepared,
                op: &layercl_core::PropagationOperator,
                pool: &rayon::ThreadPool,
            ) -> Result<(layercl_core::eval::EvalResult, Vec<MetricRecord>)> {
                let r = train_run::<T>(c, data, op, pool, &RunDir::default())?;
                Ok((r.test.clone(), r.records("")))
            }
            let (test, recs) = with_precision!(c.precision, go(&c, data, op, &pool))?;
            for mut r in recs {
                r.run = format!("{label}/seed={seed}");
                records.push(r);
            }
            tests.push(test);
        }
        rows.push(GridRow::from_runs(label.clone(), cfg.layers, &tests));
    }
    Ok(Table { rows, records })
}

/// LightGCN with `lambda1 = 0` and three layers, then the five contrast
/// schemes at their required depths.
pub fn grid(g: &Global, data_dir: &Path, seeds: &[u64]) -> Result<Table> {
    let base = g.run_config()?;
    let (data, op) = load_data(data_dir)?;
    let variants: Vec<(String, RunConfig)> = grid_rows()
        .into_iter()
        .map(|s| {
            let c = base.with_scheme(s, layercl_core::trainer::BASELINE_DEPTH);
            (c.scheme.clone(), c)
        })
        .collect();
    let seeds = if seeds.is_empty() { vec![base.init_seed] } else { seeds.to_vec() };
    let table = run_variants(&base, &data, &op, &variants, &seeds)?;
    if let Some(out) = &g.out {
        write_both(out, "grid", &table.rows)?;
        write_both(out, "grid_metrics", &table.records)?;
    }
    Ok(table)
}

pub const SWEEP_PARAMS: [&str; 3] = ["tau", "alpha", "lambda1"];

pub fn sweep(g: &Global, data_dir: &Path, param: &str, values: &[f64]) -> Result<Table> {
    if !SWEEP_PARAMS.contains(&param) {
        bail!("unknown sweep parameter {param:?} (valid: {})", SWEEP_PARAMS.join(", "));
    }
    ensure!(values.iter().all(|v| v.is_finite()), "sweep values must be finite");
    let base = g.run_config()?;
    let (data, op) = load_data(data_dir)?;
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut variants = Vec::new();
    for &v in &values {
        let mut table: toml::Table = base.to_toml().parse()?;
        table.insert(param.to_string(), toml::Value::Float(v));
        let cfg = RunConfig::from_table(&table)?;
        variants.push((format!("{param}={v}"), cfg));
    }
    let table = run_variants(&base, &data, &op, &variants, &[base.init_seed])?;
    if let Some(out) = &g.out {
        write_both(out, "sweep", &table.rows)?;
        write_both(out, "sweep_metrics", &table.records)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub variant: String,
    pub layers: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub epochs_timed: usize,
    pub median_seconds: f64,
    /// Blank when fewer than two epochs were timed
    pub iqr_seconds: Option<f64>,
    pub epochs_to_converge: Option<usize>,
    pub total_seconds: Option<f64>,
}

/// Parses a bench variant: a scheme tag, or `lightgcn` optionally followed by
/// `:layers`.
pub fn parse_variant(base: &RunConfig, spec: &str) -> Result<RunConfig> {
    let (tag, layers) = match spec.split_once(':') {
        Some((t, l)) => (t, Some(l.parse::<usize>().with_context(|| format!("bad layer count in {spec:?}"))?)),
        None => (spec, None),
    };
    let scheme = parse_scheme(tag).with_context(|| format!("unknown variant {spec:?}"))?;
    let mut cfg = base.with_scheme(scheme, layers.unwrap_or(layercl_core::trainer::BASELINE_DEPTH));
    if let (Some(l), Some(s)) = (layers, scheme) {
        ensure!(l >= s.required_depth(), "{spec}: {} needs at least {} layers", s.name(), s.required_depth());
        cfg.layers = l;
    }
    Ok(cfg)
}

/// Times `repetitions` epochs after one warm-up epoch for each variant. All
/// variants draw the same batches because they share the sampling seed.
/// With `full`, each variant is also trained to convergence.
pub fn bench(g: &Global, data_dir: &Path, variants: &[String], repetitions: usize, full: bool) -> Result<Vec<BenchRow>> {
    ensure!(repetitions >= 1, "repetitions must be at least 1");
    let base = g.run_config()?;
    let (data, op) = load_data(data_dir)?;
    let pool = thread_pool(base.workers)?;
    let mut rows = Vec::new();
    for spec in variants {
        let cfg = parse_variant(&base, spec)?;
        fn time<T: Scalar>(
            cfg: &RunConfig,
            data: &Prepared,
            op: &layercl_core::PropagationOperator,
            repetitions: usize,
        ) -> Result<(Vec<f64>, usize)> {
            let tc = cfg.train_config();
            let mut trainer = Trainer::with_operator(tc.clone(), &data.split, op.clone())?;
            let mut state = TrainState::<T>::new(&tc, &data.split)?;
            let mut clock = Wall::default();
            let mut secs = Vec::with_capacity(repetitions);
            for k in 0..=repetitions {
                let start = clock.now();
                trainer.run_epoch(&mut state)?;
                state.epoch += 1;
                if k > 0 {
                    secs.push(clock.now() - start);
                }
            }
            Ok((secs, trainer.batches_per_epoch()))
        }
        let (secs, batches) = with_precision!(cfg.precision, time(&cfg, &data, &op, repetitions))?;
        let (median, iqr) = median_iqr(&secs);
        let (mut epochs_to_converge, mut total) = (None, None);
        if full {
            fn go<T: Scalar>(
                c: &RunConfig,
                data: &Prepared,
                op: &layercl_core::PropagationOperator,
                pool: &rayon::ThreadPool,
            ) -> Result<(Option<usize>, f64)> {
                let r = train_run::<T>(c, data, op, pool, &RunDir::default())?;
                Ok((r.history.best_epoch.map(|e| e + 1), r.seconds))
            }
            let (e, t) = with_precision!(cfg.precision, go(&cfg, &data, &op, &pool))?;
            epochs_to_converge = e;
            total = Some(t);
        }
        rows.push(BenchRow {
            variant: spec.clone(),
            layers: cfg.layers,
            batch_size: cfg.batch_size,
            batches_per_epoch: batches,
            epochs_timed: secs.len(),
            median_seconds: median,
            iqr_seconds: iqr,
            epochs_to_converge,
            total_seconds: total,
        });
    }
    if let Some(out) = &g.out {
        write_both(out, "bench", &rows)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct ExportArgs {
    pub format: ExportFormat,
    pub what: ExportWhat,
    pub sample: Option<usize>,
    pub sample_seed: u64,
}

/// Writes embeddings of the best table in a run directory to `--out`.
pub fn export(g: &Global, run_dir: &Path, data_dir: &Path, args: &ExportArgs) -> Result<PathBuf> {
    let out = g.out()?.to_path_buf();
    let cfg = RunConfig::parse(&fs::read_to_string(run_dir.join(run::CONFIG))?)?;
    let bytes = fs::read(run_dir.join(run::CHECKPOINT))?;
    let header = checkpoint::read_header(&bytes)?;
    let (_, op) = load_data(data_dir)?;
    fn go<T: Scalar>(
        cfg: &RunConfig,
        bytes: &[u8],
        op: &layercl_core::PropagationOperator,
        args: &ExportArgs,
        out: &Path,
    ) -> Result<()> {
        let (_, state) = checkpoint::decode::<T>(bytes)?;
        let table: EmbeddingTable<T> = state.best;
        let emb = match args.what {
            ExportWhat::Layer0 => table.weights.clone(),
            ExportWhat::Readout => forward(&table, op, cfg.layers, cfg.readout_mode())?.readout,
        };
        let nodes: Vec<usize> = match args.sample {
            Some(n) => embeddings::sample_users(table.num_users, n, args.sample_seed)?.into_iter().map(|u| u as usize).collect(),
            None => (0..emb.rows()).collect(),
        };
        let bytes = match args.format {
            ExportFormat::Text => embeddings::to_text(&emb, &nodes).into_bytes(),
            ExportFormat::Binary => {
                ensure!(args.sample.is_none(), "user sampling is only available for the text format");
                embeddings::to_binary(&emb, table.num_users)
            }
        };
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(out, bytes)?;
        Ok(())
    }
    with_precision!(header.bits, go(&cfg, &bytes, &op, args, &out))?;
    Ok(out)
}
