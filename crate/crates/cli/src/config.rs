//! Flat `key = value` run configuration with per-key validation.

use std::fmt;

use layercl_core::losses::{ClHyper, ContrastScheme};
use layercl_core::trainer::TrainConfig;
use layercl_core::ReadoutMode;
use serde::Serialize;
use toml::{Table, Value};

/// Every key a config file may contain.
pub const KEYS: &[&str] = &[
    "scheme",
    "layers",
    "dim",
    "lr",
    "batch_size",
    "tau",
    "alpha",
    "lambda1",
    "lambda2",
    "patience",
    "eval_every",
    "max_epochs",
    "init_seed",
    "sample_seed",
    "readout",
    "precision",
    "workers",
    "groups",
];

/// Fully resolved configuration, written back verbatim into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// A scheme tag, or `lightgcn` for the BPR-only baseline
    pub scheme: String,
    pub layers: usize,
    pub dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub patience: usize,
    pub eval_every: usize,
    pub max_epochs: usize,
    pub init_seed: u64,
    pub sample_seed: u64,
    pub readout: String,
    pub precision: u32,
    pub workers: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem{}):", self.problems.len(), if self.problems.len() == 1 { "" } else { "s" })?;
        for p in &self.problems {
            writeln!(f, "  {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

pub const BASELINE: &str = "lightgcn";

/// Parses a scheme tag, accepting `lightgcn` (or `none`) for the baseline.
pub fn parse_scheme(s: &str) -> Option<Option<ContrastScheme>> {
    if s.eq_ignore_ascii_case(BASELINE) || s.eq_ignore_ascii_case("none") {
        return Some(None);
    }
    ContrastScheme::parse(s).ok().map(Some)
}

pub fn scheme_tag(s: Option<ContrastScheme>) -> String {
    s.map_or_else(|| BASELINE.to_string(), |s| s.name().to_string())
}

struct Reader<'a> {
    table: &'a Table,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn get<T>(&mut self, key: &str, default: Option<T>, convert: impl Fn(&Value) -> Option<T>, kind: &str) -> Option<T> {
        match self.table.get(key) {
            None => {
                if default.is_none() {
                    self.problems.push(format!("{key}: missing required key"));
                }
                default
            }
            Some(v) => match convert(v) {
                Some(x) => Some(x),
                None => {
                    self.problems.push(format!("{key}: expected {kind}, got {v}"));
                    default
                }
            },
        }
    }

    fn float(&mut self, key: &str, default: Option<f64>) -> f64 {
        let v = self.get(key, default, |v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)), "a number");
        v.unwrap_or(f64::NAN)
    }

    fn uint(&mut self, key: &str, default: u64) -> u64 {
        self.get(key, Some(default), |v| v.as_integer().and_then(|i| u64::try_from(i).ok()), "a non-negative integer")
            .unwrap_or(default)
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.get(key, Some(default.to_string()), |v| v.as_str().map(str::to_string), "a string")
            .unwrap_or_default()
    }

    fn check(&mut self, key: &str, ok: bool, rule: &str) {
        if !ok {
            self.problems.push(format!("{key}: {rule}"));
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError { problems: vec![e.message().to_string()] })?;
        Self::from_table(&table)
    }

    pub fn from_table(table: &Table) -> Result<Self, ConfigError> {
        let d = TrainConfig::default();
        let mut r = Reader { table, problems: Vec::new() };
        for key in table.keys() {
            if !KEYS.contains(&key.as_str()) {
                r.problems.push(format!("{key}: unknown key (valid keys: {})", KEYS.join(", ")));
            }
        }
        let scheme_text = r.string("scheme", ContrastScheme::U0I1.name());
        let scheme = parse_scheme(&scheme_text);
        if scheme.is_none() {
            let names: Vec<&str> = ContrastScheme::ALL.iter().map(|s| s.name()).collect();
            r.problems.push(format!("scheme: unknown scheme {scheme_text:?} (expected {} or {BASELINE})", names.join(", ")));
        }
        let scheme = scheme.flatten();
        let layers = table.get("layers").map(|_| r.uint("layers", 0) as usize);
        let cfg = RunConfig {
            scheme: scheme_tag(scheme),
            layers: 0,
            dim: r.uint("dim", d.dim as u64) as usize,
            lr: r.float("lr", Some(d.lr)),
            batch_size: r.uint("batch_size", d.batch_size as u64) as usize,
            tau: r.float("tau", Some(d.hyper.tau)),
            alpha: r.float("alpha", Some(d.hyper.alpha)),
            lambda1: r.float("lambda1", None),
            lambda2: r.float("lambda2", Some(d.hyper.lambda2)),
            patience: r.uint("patience", d.patience as u64) as usize,
            eval_every: r.uint("eval_every", d.eval_every as u64) as usize,
            max_epochs: r.uint("max_epochs", d.max_epochs as u64) as usize,
            init_seed: r.uint("init_seed", d.init_seed),
            sample_seed: r.uint("sample_seed", d.sample_seed),
            readout: r.string("readout", "mean"),
            precision: r.uint("precision", 32) as u32,
            workers: r.uint("workers", 1) as usize,
            groups: r.uint("groups", 5) as usize,
        };
        r.check("dim", cfg.dim > 0, "must be positive");
        r.check("lr", cfg.lr > 0.0 && cfg.lr.is_finite(), "must be positive");
        r.check("batch_size", cfg.batch_size > 0, "must be positive");
        r.check("tau", cfg.tau > 0.0 && cfg.tau.is_finite(), "must be positive");
        r.check("alpha", (0.0..=1.0).contains(&cfg.alpha), "must lie in [0, 1]");
        if table.contains_key("lambda1") {
            r.check("lambda1", cfg.lambda1 >= 0.0 && cfg.lambda1.is_finite(), "must be non-negative");
        }
        r.check("lambda2", cfg.lambda2 >= 0.0 && cfg.lambda2.is_finite(), "must be non-negative");
        r.check("patience", cfg.patience > 0, "must be positive");
        r.check("eval_every", cfg.eval_every > 0, "must be positive");
        r.check("readout", parse_readout(&cfg.readout).is_some(), "expected \"mean\" or \"layer0\"");
        r.check("precision", matches!(cfg.precision, 32 | 64), "expected 32 or 64");
        r.check("workers", cfg.workers > 0, "must be positive");
        r.check("groups", cfg.groups > 0, "must be positive");
        let required = scheme.map_or(0, |s| s.required_depth());
        let depth = layers.unwrap_or(if scheme.is_some() { required } else { layercl_core::trainer::BASELINE_DEPTH });
        if scheme.is_some() && cfg.lambda1 != 0.0 && depth < required {
            r.problems.push(format!("layers: {} needs at least {required} layers, got {depth}", cfg.scheme));
        }
        if r.problems.is_empty() {
            Ok(RunConfig { layers: depth, ..cfg })
        } else {
            Err(ConfigError { problems: r.problems })
        }
    }

    pub fn scheme(&self) -> Option<ContrastScheme> {
        parse_scheme(&self.scheme).flatten()
    }

    pub fn readout_mode(&self) -> ReadoutMode {
        parse_readout(&self.readout).unwrap_or_default()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            scheme: self.scheme(),
            layers: Some(self.layers),
            dim: self.dim,
            lr: self.lr,
            batch_size: self.batch_size,
            hyper: ClHyper { tau: self.tau, alpha: self.alpha, lambda1: self.lambda1, lambda2: self.lambda2 },
            patience: self.patience,
            eval_every: self.eval_every,
            max_epochs: self.max_epochs,
            init_seed: self.init_seed,
            sample_seed: self.sample_seed,
            readout: self.readout_mode(),
        }
    }

    /// Same config with a different scheme; the depth follows the scheme
    /// unless the baseline is requested, which uses `baseline_layers`.
    pub fn with_scheme(&self, scheme: Option<ContrastScheme>, baseline_layers: usize) -> RunConfig {
        let (layers, lambda1) = match scheme {
            Some(s) => (s.required_depth(), self.lambda1),
            None => (baseline_layers, 0.0),
        };
        RunConfig { scheme: scheme_tag(scheme), layers, lambda1, ..self.clone() }
    }

    /// Overrides every seed with values derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.init_seed = seed;
        self.sample_seed = seed.wrapping_add(1);
    }

    /// Canonical TOML text; every key is present.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_readout(s: &str) -> Option<ReadoutMode> {
    match s.to_ascii_lowercase().as_str() {
        "mean" => Some(ReadoutMode::Mean),
        "layer0" => Some(ReadoutMode::Layer0),
        _ => None,
    }
}
