//! Versioned binary checkpoint holding everything needed to resume a run
//! bit-for-bit: current and best tables, Adam moments, sampler RNG position,
//! early-stopping state and the epoch history.

use anyhow::{bail, Result};
use layercl_core::optim::AdamState;
use layercl_core::trainer::{EarlyStop, EpochRecord, StopReason, TrainHistory, TrainState};
use layercl_core::{EmbeddingTable, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binary::{Decoder, Encoder};

const MAGIC: &[u8; 8] = b"LCLCKPT\0";
const VERSION: u32 = 1;

/// Precision and config hash, readable without decoding the tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub bits: u32,
    pub config_hash: [u8; 32],
}

fn put_table<T: Scalar>(e: &mut Encoder, t: &EmbeddingTable<T>) {
    e.u64(t.num_users as u64);
    e.u64(t.num_items as u64);
    e.u64(t.weights.cols() as u64);
    e.u64(t.init_seed);
    e.matrix(&t.weights);
}

fn get_table<T: Scalar>(d: &mut Decoder<'_>) -> Result<EmbeddingTable<T>> {
    let (m, n, dim, init_seed) = (d.usize()?, d.usize()?, d.usize()?, d.u64()?);
    let weights = d.matrix(m + n, dim)?;
    Ok(EmbeddingTable { num_users: m, num_items: n, weights, init_seed })
}

fn put_opt_f64(e: &mut Encoder, v: Option<f64>) {
    e.u8(v.is_some() as u8);
    e.f64(v.unwrap_or(0.0));
}

fn get_opt_f64(d: &mut Decoder<'_>) -> Result<Option<f64>> {
    let flag = d.u8()?;
    let v = d.f64()?;
    Ok((flag == 1).then_some(v))
}

fn put_opt_u64(e: &mut Encoder, v: Option<usize>) {
    e.u8(v.is_some() as u8);
    e.u64(v.unwrap_or(0) as u64);
}

fn get_opt_u64(d: &mut Decoder<'_>) -> Result<Option<usize>> {
    let flag = d.u8()?;
    let v = d.usize()?;
    Ok((flag == 1).then_some(v))
}

pub fn encode<T: Scalar>(state: &TrainState<T>, config_hash: [u8; 32]) -> Vec<u8> {
    let mut e = Encoder::header(MAGIC, VERSION);
    e.u32(T::BITS);
    e.bytes(&config_hash);
    put_table(&mut e, &state.table);
    put_table(&mut e, &state.best);

    let a = &state.adam;
    e.u64(a.t);
    for v in [a.lr, a.beta1, a.beta2, a.eps] {
        e.f64(v);
    }
    e.matrix(&a.m);
    e.matrix(&a.v);

    e.bytes(&state.rng.get_seed());
    e.u64(state.rng.get_stream());
    e.u128(state.rng.get_word_pos());

    e.u64(state.epoch as u64);
    let s = &state.stopper;
    e.u64(s.patience as u64);
    put_opt_u64(&mut e, s.best.map(|b| b.0));
    put_opt_f64(&mut e, s.best.map(|b| b.1));
    e.u64(s.since_best as u64);

    let h = &state.history;
    e.u64(h.epochs.len() as u64);
    for r in &h.epochs {
        e.u64(r.epoch as u64);
        for v in [r.loss, r.bpr, r.cl, r.reg, r.seconds] {
            e.f64(v);
        }
        put_opt_f64(&mut e, r.valid_ndcg10);
    }
    put_opt_u64(&mut e, h.best_epoch);
    e.u8(match h.stop {
        None => 0,
        Some(StopReason::EarlyStop) => 1,
        Some(StopReason::MaxEpochs) => 2,
    });
    e.buf
}

pub fn read_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    let mut d = Decoder::open(bytes, "checkpoint", MAGIC, VERSION)?;
    let bits = d.u32()?;
    let config_hash = d.take(32)?.try_into().expect("32 bytes");
    Ok(CheckpointHeader { bits, config_hash })
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(CheckpointHeader, TrainState<T>)> {
    let mut d = Decoder::open(bytes, "checkpoint", MAGIC, VERSION)?;
    let bits = d.u32()?;
    if bits != T::BITS {
        bail!("checkpoint stores {bits}-bit embeddings but {}-bit precision was requested", T::BITS);
    }
    let config_hash: [u8; 32] = d.take(32)?.try_into().expect("32 bytes");
    let table = get_table::<T>(&mut d)?;
    let best = get_table::<T>(&mut d)?;
    let rows = table.weights.rows();
    let dim = table.weights.cols();

    let t = d.u64()?;
    let (lr, beta1, beta2, eps) = (d.f64()?, d.f64()?, d.f64()?, d.f64()?);
    let m = d.matrix(rows, dim)?;
    let v = d.matrix(rows, dim)?;
    let adam = AdamState { m, v, t, lr, beta1, beta2, eps };

    let seed: [u8; 32] = d.take(32)?.try_into().expect("32 bytes");
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(d.u64()?);
    rng.set_word_pos(d.u128()?);

    let epoch = d.usize()?;
    let patience = d.usize()?;
    let best_epoch = get_opt_u64(&mut d)?;
    let best_metric = get_opt_f64(&mut d)?;
    let since_best = d.usize()?;
    let stopper = EarlyStop { patience, best: best_epoch.zip(best_metric), since_best };

    let n = d.usize()?;
    let mut epochs = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        epochs.push(EpochRecord {
            epoch: d.usize()?,
            loss: d.f64()?,
            bpr: d.f64()?,
            cl: d.f64()?,
            reg: d.f64()?,
            seconds: d.f64()?,
            valid_ndcg10: get_opt_f64(&mut d)?,
        });
    }
    let best_epoch_h = get_opt_u64(&mut d)?;
    let stop = match d.u8()? {
        0 => None,
        1 => Some(StopReason::EarlyStop),
        2 => Some(StopReason::MaxEpochs),
        other => bail!("checkpoint has unknown stop reason {other}"),
    };
    d.finish()?;
    let history = TrainHistory { epochs, best_epoch: best_epoch_h, stop };
    let state = TrainState { table, adam, rng, epoch, stopper, best, history };
    Ok((CheckpointHeader { bits, config_hash }, state))
}
