use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use layercl::commands::{self, ExportArgs, Global, PrepareArgs, SynthArgs};
use layercl::config::RunConfig;
use layercl::dataset::Prepared;
use layercl::embeddings::{self, ExportFormat, ExportWhat};
use layercl::report::lookup;
use layercl::run::{self, config_hash};
use layercl::checkpoint;
use layercl_core::data::Delimiter;
use layercl_core::trainer::{serial_validator, NoClock, TrainState, Trainer};
use tempfile::TempDir;

const SMALL: &str = r#"
scheme = "U0_I1"
lambda1 = 0.05
dim = 8
lr = 0.01
batch_size = 256
max_epochs = 4
patience = 3
workers = 1
"#;

fn prepare_args(input: PathBuf) -> PrepareArgs {
    PrepareArgs {
        input,
        delimiter: Delimiter::Tab,
        user_col: 0,
        item_col: 1,
        rating_col: None,
        skip_header: false,
        threshold: None,
        k_user: 2,
        k_item: 2,
        valid: 0.1,
        test: 0.2,
    }
}

/// A small synthetic data directory plus a config file.
struct Fixture {
    root: TempDir,
    data: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new(config: &str) -> Self {
        let root = TempDir::new().unwrap();
        let raw = root.path().join("raw");
        let g = Global { out: Some(raw.clone()), seed: Some(3), ..Global::default() };
        let ratings = commands::synth(&g, &SynthArgs { users: 150, items: 120, interactions: 2500, clusters: 4 }).unwrap();
        let data = root.path().join("data");
        let g = Global { out: Some(data.clone()), seed: Some(1), ..Global::default() };
        commands::prepare(&g, &prepare_args(ratings)).unwrap();
        let path = root.path().join("run.toml");
        fs::write(&path, config).unwrap();
        Fixture { root, data, config: path }
    }

    fn global(&self, out: &str) -> Global {
        Global { config: Some(self.config.clone()), out: Some(self.root.path().join(out)), ..Global::default() }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Checkpoint bytes with the wall-clock epoch timings zeroed.
fn timeless_checkpoint(path: &Path) -> Vec<u8> {
    let (header, mut state) = checkpoint::decode::<f32>(&fs::read(path).unwrap()).unwrap();
    state.history.epochs.iter_mut().for_each(|r| r.seconds = 0.0);
    checkpoint::encode(&state, header.config_hash)
}

const TOY_RATINGS: &str = "\
a\tx\t5
a\ty\t4
a\tz\t1
b\tx\t3
b\ty\t5
b\tw\t4
c\tx\t4
c\tz\t5
c\tw\t2
d\ty\t3
d\tz\t4
d\tw\t5
e\tx\t1
";

#[test]
fn prepare_is_byte_identical_on_rerun() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("ratings.tsv");
    fs::write(&raw, TOY_RATINGS).unwrap();
    let args = PrepareArgs { rating_col: Some(2), threshold: Some(3.0), valid: 0.2, test: 0.2, ..prepare_args(raw) };
    let mut outputs = Vec::new();
    for name in ["one", "two"] {
        let g = Global { out: Some(tmp.path().join(name)), seed: Some(5), ..Global::default() };
        commands::prepare(&g, &args).unwrap();
        outputs.push(read_dir_bytes(&tmp.path().join(name)));
    }
    assert_eq!(outputs[0], outputs[1]);
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    for f in ["graph.bin", "items.tsv", "meta.json", "test.tsv", "train.tsv", "users.tsv", "valid.tsv"] {
        assert!(names.contains(&f), "{f} missing");
    }
}

#[test]
fn metadata_density_matches_hand_count() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("ratings.tsv");
    fs::write(&raw, TOY_RATINGS).unwrap();
    let args = PrepareArgs { rating_col: Some(2), threshold: Some(3.0), valid: 0.2, test: 0.2, ..prepare_args(raw) };
    let g = Global { out: Some(tmp.path().join("d")), seed: Some(5), ..Global::default() };
    let p = commands::prepare(&g, &args).unwrap();
    // ratings >= 3 keep 10 pairs; e drops out (only a 1-star rating); every
    // remaining user and item has at least 2 kept pairs
    assert_eq!((p.meta.num_users, p.meta.num_items, p.meta.interactions), (4, 4, 10));
    assert_eq!(p.meta.density, 10.0 / 16.0);
    assert_eq!(p.meta.train + p.meta.valid + p.meta.test, 10);
    let back = Prepared::read(&tmp.path().join("d")).unwrap();
    assert_eq!(back.meta, p.meta);
    assert_eq!(back.split, p.split);
}

#[test]
fn oversized_k_exits_nonzero_naming_k() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("ratings.tsv");
    fs::write(&raw, TOY_RATINGS).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_layercl"))
        .args(["prepare", raw.to_str().unwrap(), "--k-user", "50", "--out"])
        .arg(tmp.path().join("d"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("k_user=50"), "{stderr}");
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn config_errors_name_every_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "dim = 0\nbatch_size = -4\nschema = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_layercl"))
        .args(["train", "--data", "nowhere", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    for key in ["lambda1", "dim", "batch_size", "schema"] {
        assert!(stderr.contains(key), "{key} missing from {stderr}");
    }
}

#[test]
fn train_writes_every_declared_output() {
    let fx = Fixture::new(&SMALL.replace("U0_I1", "U0_U2"));
    let g = fx.global("run");
    let summary = commands::train(&g, &fx.data, false).unwrap();
    let dir = fx.out("run");
    for f in [run::CONFIG, run::MANIFEST, run::HISTORY, run::CHECKPOINT, "report.json", "report.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    for metric in ["recall", "ndcg"] {
        for k in [10, 20, 50] {
            let v = lookup(&summary.records, "U0_U2", "test", "", metric, k).unwrap();
            assert!((0.0..=1.0).contains(&v), "{metric}@{k} = {v}");
        }
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(run::MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest["config"]["layers"], 2);
    assert_eq!(manifest["dataset_fingerprint"].as_str().unwrap().len(), 64);
    let history = fs::read_to_string(dir.join(run::HISTORY)).unwrap();
    assert_eq!(history.lines().count(), summary.epochs);
    // the stored config reproduces the run
    let stored = RunConfig::parse(&fs::read_to_string(dir.join(run::CONFIG)).unwrap()).unwrap();
    assert_eq!(stored, RunConfig::parse(&SMALL.replace("U0_I1", "U0_U2")).unwrap());
}

#[test]
fn rerun_from_manifest_config_reproduces_report() {
    let fx = Fixture::new(SMALL);
    commands::train(&fx.global("a"), &fx.data, false).unwrap();
    let g = Global { config: Some(fx.out("a").join(run::CONFIG)), out: Some(fx.out("b")), ..Global::default() };
    commands::train(&g, &fx.data, false).unwrap();
    for f in ["report.json", "report.csv"] {
        assert_eq!(fs::read(fx.out("a").join(f)).unwrap(), fs::read(fx.out("b").join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        timeless_checkpoint(&fx.out("a").join(run::CHECKPOINT)),
        timeless_checkpoint(&fx.out("b").join(run::CHECKPOINT))
    );
}

#[test]
fn resume_after_interruption_matches_uninterrupted_run() {
    let fx = Fixture::new(SMALL);
    commands::train(&fx.global("full"), &fx.data, false).unwrap();

    // simulate a crash after two epochs: write the checkpoint they leave behind
    let cfg = fx.global("resumed").run_config().unwrap();
    let data = Prepared::read(&fx.data).unwrap();
    let tc = cfg.train_config();
    let mut trainer = Trainer::new(tc.clone(), &data.split).unwrap();
    let mut state = TrainState::<f32>::new(&tc, &data.split).unwrap();
    let mut validate = serial_validator(&data.split);
    for _ in 0..2 {
        trainer.step(&mut state, &mut validate, &mut NoClock).unwrap();
    }
    let dir = fx.out("resumed");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(run::CHECKPOINT), checkpoint::encode(&state, config_hash(&cfg))).unwrap();

    commands::train(&fx.global("resumed"), &fx.data, true).unwrap();
    assert_eq!(fs::read(fx.out("full").join("report.json")).unwrap(), fs::read(dir.join("report.json")).unwrap());
    assert_eq!(timeless_checkpoint(&fx.out("full").join(run::CHECKPOINT)), timeless_checkpoint(&dir.join(run::CHECKPOINT)));
}

#[test]
fn resume_refuses_a_different_config() {
    let fx = Fixture::new(SMALL);
    commands::train(&fx.global("run"), &fx.data, false).unwrap();
    fs::write(&fx.config, SMALL.replace("lambda1 = 0.05", "lambda1 = 0.1")).unwrap();
    let err = commands::train(&fx.global("run"), &fx.data, true).err().unwrap();
    assert!(err.to_string().contains("different configuration"), "{err}");
}

#[test]
fn eval_reproduces_training_report() {
    let fx = Fixture::new(SMALL);
    let summary = commands::train(&fx.global("run"), &fx.data, false).unwrap();
    let again = commands::eval(&Global::default(), &fx.out("run"), &fx.data).unwrap();
    assert_eq!(again, summary.records);
}

#[test]
fn binary_export_round_trips_bitwise() {
    let fx = Fixture::new(&SMALL.replace("workers = 1", "workers = 1\nprecision = 64"));
    commands::train(&fx.global("run"), &fx.data, false).unwrap();
    let bytes = fs::read(fx.out("run").join(run::CHECKPOINT)).unwrap();
    let (_, state) = checkpoint::decode::<f64>(&bytes).unwrap();

    let args = ExportArgs { format: ExportFormat::Binary, what: ExportWhat::Layer0, sample: None, sample_seed: 0 };
    let path = commands::export(&fx.global("emb.bin"), &fx.out("run"), &fx.data, &args).unwrap();
    let (m, n, emb) = embeddings::from_binary(&fs::read(&path).unwrap()).unwrap();
    assert_eq!((m, n), (state.best.num_users, state.best.num_items));
    let expected = state.best.weights.cast::<f32>();
    assert!(emb.as_slice().iter().zip(expected.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));

    // re-encoding the imported matrix gives the same file
    assert_eq!(embeddings::to_binary(&emb, m), fs::read(&path).unwrap());
}

#[test]
fn text_export_row_counts_and_sampling() {
    let fx = Fixture::new(SMALL);
    commands::train(&fx.global("run"), &fx.data, false).unwrap();
    let data = Prepared::read(&fx.data).unwrap();
    let (m, n) = (data.split.num_users(), data.split.num_items());

    let full = ExportArgs { format: ExportFormat::Text, what: ExportWhat::Readout, sample: None, sample_seed: 0 };
    let path = commands::export(&fx.global("full.tsv"), &fx.out("run"), &fx.data, &full).unwrap();
    let rows = embeddings::from_text(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(rows.len(), m + n);
    assert!(rows.iter().all(|(_, v)| v.len() == 8));

    let sampled = ExportArgs { sample: Some(40), sample_seed: 9, ..full };
    let a = commands::export(&fx.global("s1.tsv"), &fx.out("run"), &fx.data, &sampled).unwrap();
    let b = commands::export(&fx.global("s2.tsv"), &fx.out("run"), &fx.data, &sampled).unwrap();
    let a = fs::read_to_string(a).unwrap();
    assert_eq!(a, fs::read_to_string(b).unwrap());
    let rows = embeddings::from_text(&a).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|(node, _)| *node < m));

    let bad = ExportArgs { format: ExportFormat::Binary, ..sampled };
    assert!(commands::export(&fx.global("bad.bin"), &fx.out("run"), &fx.data, &bad).is_err());
    assert!("parquet".parse::<ExportFormat>().is_err());
}

#[test]
fn grid_has_six_rows_in_order_and_is_deterministic() {
    let fx = Fixture::new(&SMALL.replace("max_epochs = 4", "max_epochs = 2"));
    let a = commands::grid(&fx.global("g1"), &fx.data, &[]).unwrap();
    let names: Vec<&str> = a.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["lightgcn", "U0_I0", "U1_I1", "U0_I1", "U0_U2", "U0_SumU123"]);
    assert_eq!(a.rows.iter().map(|r| r.layers).collect::<Vec<_>>(), [3, 0, 1, 1, 2, 3]);
    for r in &a.rows {
        for v in [r.recall10, r.ndcg10, r.recall20, r.ndcg20, r.recall50, r.ndcg50] {
            assert!(v.is_finite() && (0.0..=1.0).contains(&v), "{r:?}");
        }
    }
    commands::grid(&fx.global("g2"), &fx.data, &[]).unwrap();
    assert_eq!(read_dir_bytes(&fx.out("g1")), read_dir_bytes(&fx.out("g2")));
}

#[test]
fn sweep_rows_sorted_by_value() {
    let fx = Fixture::new(&SMALL.replace("max_epochs = 4", "max_epochs = 1"));
    let t = commands::sweep(&fx.global("s"), &fx.data, "alpha", &[1.0, 0.0, 0.5]).unwrap();
    let names: Vec<&str> = t.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["alpha=0", "alpha=0.5", "alpha=1"]);
    let err = commands::sweep(&fx.global("s"), &fx.data, "gamma", &[1.0]).err().unwrap().to_string();
    for name in ["tau", "alpha", "lambda1"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bench_with_one_repetition_leaves_iqr_blank() {
    let fx = Fixture::new(SMALL);
    let rows = commands::bench(&fx.global("b"), &fx.data, &["U0_I1".into(), "lightgcn:3".into()], 1, false).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.iqr_seconds.is_none() && r.epochs_timed == 1 && r.median_seconds > 0.0));
    assert_eq!(rows[1].layers, 3);
    let csv = fs::read_to_string(fx.out("b").join("bench.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "iqr_seconds").unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(col), Some(""));
    }
    assert!(commands::bench(&fx.global("b"), &fx.data, &["U9_I9".into()], 1, false).is_err());
}
