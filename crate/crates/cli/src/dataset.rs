//! Prepared dataset directories: split files, id maps, metadata and the
//! cached propagation operator.
//!
//! Layout of a data directory:
//!
//! ```text
//! train.tsv  valid.tsv  test.tsv   user_idx<TAB>item_idx
//! users.tsv  items.tsv             raw_id<TAB>index
//! meta.json                        counts, density, seed, filter settings
//! graph.bin                        optional operator cache
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use layercl_core::data::{
    dedup_pairs, k_core_filter, parse_records, remap_ids, split_user_based, threshold_implicit, ColumnSpec, IdMap,
    InteractionSet, SplitDataset, SplitRatios,
};
use layercl_core::PropagationOperator;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binary::{Decoder, Encoder};

pub const SPLIT_FILES: [&str; 3] = ["train.tsv", "valid.tsv", "test.tsv"];
const GRAPH_MAGIC: &[u8; 8] = b"LCLGRAPH";
const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSettings {
    /// Minimum rating kept as a positive; `None` keeps every record
    pub threshold: Option<f64>,
    pub k_user: usize,
    pub k_item: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub num_users: usize,
    pub num_items: usize,
    pub interactions: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub density: f64,
    pub split_seed: u64,
    pub ratios: [f64; 3],
    pub filters: FilterSettings,
    pub source: String,
}

/// A split dataset with its id maps.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: SplitDataset,
    pub users: IdMap,
    pub items: IdMap,
    pub meta: Metadata,
}

#[derive(Debug, Clone)]
pub struct PrepareSettings {
    pub columns: ColumnSpec,
    pub filters: FilterSettings,
    pub ratios: SplitRatios,
    pub seed: u64,
}

/// Load, threshold, k-core filter, remap and split a raw rating file.
pub fn prepare(raw: &Path, settings: &PrepareSettings) -> Result<Prepared> {
    let text = fs::read_to_string(raw).with_context(|| format!("reading {}", raw.display()))?;
    let records = parse_records(&text, &settings.columns).with_context(|| format!("parsing {}", raw.display()))?;
    let pairs = match settings.filters.threshold {
        Some(t) => threshold_implicit(&records, t),
        None => records.into_iter().map(|r| (r.user_raw, r.item_raw)).collect(),
    };
    let pairs = dedup_pairs(&pairs);
    let f = &settings.filters;
    let pairs = k_core_filter(&pairs, f.k_user, f.k_item)
        .with_context(|| format!("k-core filtering with k_user={} k_item={}", f.k_user, f.k_item))?;
    let (set, users, items) = remap_ids(&pairs)?;
    let split = split_user_based(&set, settings.ratios, settings.seed)?;
    let meta = Metadata {
        num_users: set.num_users(),
        num_items: set.num_items(),
        interactions: set.len(),
        train: split.train.len(),
        valid: split.valid.len(),
        test: split.test.len(),
        density: set.density(),
        split_seed: settings.seed,
        ratios: [settings.ratios.train, settings.ratios.valid, settings.ratios.test],
        filters: settings.filters.clone(),
        source: raw.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    Ok(Prepared { split, users, items, meta })
}

fn pairs_text(set: &InteractionSet) -> String {
    let mut s = String::with_capacity(set.len() * 10);
    for (u, i) in set.pairs() {
        writeln!(s, "{u}\t{i}").expect("write to string");
    }
    s
}

fn ids_text(map: &IdMap) -> String {
    let mut s = String::new();
    for (k, raw) in map.raw_ids().iter().enumerate() {
        writeln!(s, "{raw}\t{k}").expect("write to string");
    }
    s
}

fn read_pairs(path: &Path, m: usize, n: usize) -> Result<InteractionSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (line, row) in text.lines().enumerate() {
        if row.is_empty() {
            continue;
        }
        let parsed = row.split_once('\t').and_then(|(u, i)| Some((u.parse::<u32>().ok()?, i.parse::<u32>().ok()?)));
        match parsed {
            Some(p) => pairs.push(p),
            None => bail!("{}:{}: expected user_idx<TAB>item_idx", path.display(), line + 1),
        }
    }
    InteractionSet::from_pairs(m, n, &pairs).with_context(|| format!("loading {}", path.display()))
}

fn read_ids(path: &Path) -> Result<IdMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut raw = Vec::new();
    for (line, row) in text.lines().enumerate() {
        let (id, idx) = row
            .rsplit_once('\t')
            .with_context(|| format!("{}:{}: expected raw_id<TAB>index", path.display(), line + 1))?;
        ensure!(idx.parse::<usize>().ok() == Some(raw.len()), "{}:{}: indices must be 0, 1, 2, ...", path.display(), line + 1);
        raw.push(id.to_string());
    }
    Ok(IdMap::from_raw_ids(raw)?)
}

impl Prepared {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let sets = [&self.split.train, &self.split.valid, &self.split.test];
        for (name, set) in SPLIT_FILES.iter().zip(sets) {
            fs::write(dir.join(name), pairs_text(set))?;
        }
        fs::write(dir.join("users.tsv"), ids_text(&self.users))?;
        fs::write(dir.join("items.tsv"), ids_text(&self.items))?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        let op = PropagationOperator::from_train(&self.split.train);
        fs::write(dir.join("graph.bin"), encode_operator(&op))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: Metadata = serde_json::from_str(
            &fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?,
        )
        .with_context(|| format!("parsing {}", meta_path.display()))?;
        let (m, n) = (meta.num_users, meta.num_items);
        let split = SplitDataset {
            train: read_pairs(&dir.join(SPLIT_FILES[0]), m, n)?,
            valid: read_pairs(&dir.join(SPLIT_FILES[1]), m, n)?,
            test: read_pairs(&dir.join(SPLIT_FILES[2]), m, n)?,
            split_seed: meta.split_seed,
        };
        let users = read_ids(&dir.join("users.tsv"))?;
        let items = read_ids(&dir.join("items.tsv"))?;
        ensure!(users.len() == m && items.len() == n, "id maps disagree with meta.json in {}", dir.display());
        Ok(Self { split, users, items, meta })
    }
}

/// Loads the cached operator when it matches `train`, otherwise rebuilds it.
pub fn load_operator(dir: &Path, train: &InteractionSet) -> PropagationOperator {
    let cached = fs::read(dir.join("graph.bin")).ok().and_then(|b| decode_operator(&b).ok());
    match cached {
        Some(op)
            if op.num_users() == train.num_users()
                && op.num_items() == train.num_items()
                && op.nnz() == 2 * train.len() =>
        {
            op
        }
        _ => PropagationOperator::from_train(train),
    }
}

pub fn encode_operator(op: &PropagationOperator) -> Vec<u8> {
    let mut e = Encoder::header(GRAPH_MAGIC, GRAPH_VERSION);
    e.u64(op.num_users() as u64);
    e.u64(op.num_items() as u64);
    e.u64(op.nnz() as u64);
    op.offsets().iter().for_each(|&o| e.u64(o as u64));
    op.cols().iter().for_each(|&c| e.u32(c));
    op.weights().iter().for_each(|&w| e.f64(w));
    e.buf
}

pub fn decode_operator(bytes: &[u8]) -> Result<PropagationOperator> {
    let mut d = Decoder::open(bytes, "graph cache", GRAPH_MAGIC, GRAPH_VERSION)?;
    let (m, n, nnz) = (d.usize()?, d.usize()?, d.usize()?);
    let offsets = (0..=m + n).map(|_| d.usize()).collect::<Result<Vec<_>, _>>()?;
    let cols = (0..nnz).map(|_| d.u32()).collect::<Result<Vec<_>, _>>()?;
    let weights = (0..nnz).map(|_| d.f64()).collect::<Result<Vec<_>, _>>()?;
    d.finish()?;
    Ok(PropagationOperator::from_parts(m, n, offsets, cols, weights)?)
}

/// SHA-256 over the split files and metadata, hex encoded.
pub fn fingerprint(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in SPLIT_FILES.iter().chain(&["meta.json"]) {
        let path: PathBuf = dir.join(name);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex(&h.finalize()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
