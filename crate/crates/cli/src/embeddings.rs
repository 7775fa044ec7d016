//! Embedding export: `node_index<TAB>v0,v1,...` text or a flat binary file
//! (magic, version, M, N, d, row-major `f32`).

use std::fmt::Write as _;

use anyhow::{bail, Result};
use layercl_core::{Matrix, Scalar};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binary::{Decoder, Encoder};

const MAGIC: &[u8; 8] = b"LCLEMBED";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Text,
    Binary,
}

impl std::str::FromStr for ExportFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "tsv" => Ok(Self::Text),
            "binary" | "bin" => Ok(Self::Binary),
            other => bail!("unknown export format {other:?} (expected text or binary)"),
        }
    }
}

/// Which embeddings to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportWhat {
    Readout,
    Layer0,
}

impl std::str::FromStr for ExportWhat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "readout" => Ok(Self::Readout),
            "layer0" => Ok(Self::Layer0),
            other => bail!("unknown embedding kind {other:?} (expected readout or layer0)"),
        }
    }
}

/// `n` distinct users drawn with a seeded generator, ascending.
pub fn sample_users(num_users: usize, n: usize, seed: u64) -> Result<Vec<u32>> {
    if n > num_users {
        bail!("cannot sample {n} users from {num_users}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<u32> = sample(&mut rng, num_users, n).into_iter().map(|u| u as u32).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// One line per listed node, values printed with round-trip precision.
pub fn to_text<T: Scalar>(emb: &Matrix<T>, nodes: &[usize]) -> String {
    let mut s = String::new();
    for &node in nodes {
        write!(s, "{node}\t").expect("write to string");
        for (c, v) in emb.row(node).iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            write!(s, "{}", v.to_f64() as f32).expect("write to string");
        }
        s.push('\n');
    }
    s
}

pub fn from_text(text: &str) -> Result<Vec<(usize, Vec<f32>)>> {
    text.lines()
        .enumerate()
        .map(|(k, line)| {
            let Some((node, values)) = line.split_once('\t') else { bail!("line {}: missing tab", k + 1) };
            let values = values.split(',').map(str::parse::<f32>).collect::<Result<Vec<_>, _>>()?;
            Ok((node.parse()?, values))
        })
        .collect()
}

pub fn to_binary<T: Scalar>(emb: &Matrix<T>, num_users: usize) -> Vec<u8> {
    let mut e = Encoder::header(MAGIC, VERSION);
    e.u64(num_users as u64);
    e.u64((emb.rows() - num_users) as u64);
    e.u64(emb.cols() as u64);
    e.matrix(&emb.cast::<f32>());
    e.buf
}

/// Returns `(M, N, embeddings)`.
pub fn from_binary(bytes: &[u8]) -> Result<(usize, usize, Matrix<f32>)> {
    let mut d = Decoder::open(bytes, "embedding", MAGIC, VERSION)?;
    let (m, n, dim) = (d.usize()?, d.usize()?, d.usize()?);
    let emb = d.matrix::<f32>(m + n, dim)?;
    d.finish()?;
    Ok((m, n, emb))
}
