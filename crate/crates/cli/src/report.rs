//! Machine-readable reports: a JSON document and a flat CSV with the same
//! records.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use layercl_core::eval::EvalResult;
use serde::Serialize;

/// One value of one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    /// Row label: a run, a scheme or a swept value
    pub run: String,
    pub phase: String,
    /// Sparsity group (`G1` is the sparsest); empty for all users
    pub group: String,
    pub k: usize,
    pub metric: String,
    pub value: f64,
    pub users: usize,
}

pub fn records(run: &str, phase: &str, group: &str, res: &EvalResult) -> Vec<MetricRecord> {
    let mut out = Vec::with_capacity(2 * res.ks.len());
    for (j, &k) in res.ks.iter().enumerate() {
        for (metric, value) in [("recall", res.recall[j]), ("ndcg", res.ndcg[j])] {
            out.push(MetricRecord {
                run: run.to_string(),
                phase: phase.to_string(),
                group: group.to_string(),
                k,
                metric: metric.to_string(),
                value,
                users: res.num_users_evaluated,
            });
        }
    }
    out
}

pub fn group_records(run: &str, phase: &str, groups: &[EvalResult]) -> Vec<MetricRecord> {
    groups.iter().enumerate().flat_map(|(g, r)| records(run, phase, &format!("G{}", g + 1), r)).collect()
}

/// Finds a value by run, phase, group, metric and cutoff.
pub fn lookup(records: &[MetricRecord], run: &str, phase: &str, group: &str, metric: &str, k: usize) -> Option<f64> {
    records
        .iter()
        .find(|r| r.run == run && r.phase == phase && r.group == group && r.metric == metric && r.k == k)
        .map(|r| r.value)
}

/// Serializes rows to CSV text with a header line.
pub fn to_csv<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`.
pub fn write_both<S: Serialize>(dir: &Path, stem: &str, rows: &[S]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(rows)? + "\n";
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    let path = dir.join(format!("{stem}.csv"));
    fs::write(&path, to_csv(rows)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Median and interquartile range with linear interpolation between order
/// statistics. The IQR is `None` for fewer than two samples.
pub fn median_iqr(samples: &[f64]) -> (f64, Option<f64>) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
    };
    if s.is_empty() {
        return (f64::NAN, None);
    }
    let iqr = (s.len() > 1).then(|| q(0.75) - q(0.25));
    (q(0.5), iqr)
}
