//! Encoder timing for the three inference modes.

use std::time::Instant;

use tt_core::attention::ContextConfig;
use tt_core::data::{generate_dataset, GenParams};
use tt_core::infer::{query_slice_encode, stream_encode};
use tt_core::metrics::{median, BenchMode, BenchRow};
use tt_core::nn::{ParamStore, Tensor2};
use tt_core::transducer::{Model, Vocab};

use crate::error::Result;

/// Encodes `x` once in `mode`; `step` is the batch-step size or the query
/// block. Returns the output frame count.
pub fn encode_once(
    model: &Model,
    store: &ParamStore,
    x: &Tensor2,
    cfg: &ContextConfig,
    mode: BenchMode,
    step: usize,
) -> Result<usize> {
    let out = match mode {
        BenchMode::Training => model.audio_encode(store, x, cfg)?,
        BenchMode::QuerySlice => query_slice_encode(model, store, x, step, cfg)?.0,
        BenchMode::BatchStep => stream_encode(model, store, x, cfg, step)?,
    };
    Ok(out.rows())
}

/// Median wall time of `repeats` encodes of `x` (after one warm-up run).
pub fn bench_encode(
    model: &Model,
    store: &ParamStore,
    x: &Tensor2,
    cfg: &ContextConfig,
    mode: BenchMode,
    step: usize,
    repeats: usize,
) -> Result<BenchRow> {
    let frames_out = encode_once(model, store, x, cfg, mode, step)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        encode_once(model, store, x, cfg, mode, step)?;
        times.push(t0.elapsed().as_secs_f64());
    }
    let audio = x.rows() as f64 * cfg.frame_ms / 1000.0;
    Ok(BenchRow::new(mode, step, audio, median(&times)?, frames_out)?)
}

/// Concatenated synthetic utterances, trimmed to exactly `frames` rows.
pub fn bench_audio(vocab: &Vocab, params: &GenParams, seed: u64, frames: usize) -> Result<Tensor2> {
    let mut n = 64;
    loop {
        let ds = generate_dataset(n, seed, "b", vocab, params)?;
        let mut x = Tensor2::empty(params.feature_dim);
        for u in &ds.utterances {
            x.append(&u.features)?;
        }
        if x.rows() >= frames {
            return Ok(x.slice_rows(0, frames));
        }
        n *= 2;
    }
}
