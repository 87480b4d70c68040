//! Threaded Y-model schedule: the caller's thread runs the shared layers
//! and hands each new block of activations to two branch workers over
//! channels (one producer, two consumers). Results match the cooperative
//! `YSession` exactly because each branch sees the same blocks in the same
//! order.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use tt_core::attention::ContextConfig;
use tt_core::infer::{check_shared_prefix, Branch, BranchKind, Clock, EventKind, FinalResult, SharedEncoder, YEvent};
use tt_core::nn::{ParamStore, Tensor2};
use tt_core::transducer::Model;

use crate::error::{CliError, Result};

/// Milliseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1000.0
    }
}

enum Block {
    Rows { rows: Arc<Tensor2>, frames_in: usize },
    End { rows: Arc<Tensor2>, frames_in: usize },
}

/// Everything a concurrent run produced.
#[derive(Debug, Clone)]
pub struct ConcurrentRun {
    pub events: Vec<YEvent>,
    pub result: FinalResult,
    /// Rows each shared layer processed.
    pub shared_layer_rows: Vec<usize>,
}

fn low_worker(model: &Model, store: &ParamStore, mut branch: Branch, rx: mpsc::Receiver<Block>, clock: &WallClock) -> tt_core::Result<(Branch, Vec<YEvent>)> {
    let frame_ms = branch.config().frame_ms;
    let mut events = Vec::new();
    let mut last: Option<Vec<usize>> = None;
    for block in rx {
        let (rows, frames_in, end) = match block {
            Block::Rows { rows, frames_in } => (rows, frames_in, false),
            Block::End { rows, frames_in } => (rows, frames_in, true),
        };
        branch.consume(model, store, &rows, end)?;
        let labels = &branch.hypothesis().labels;
        let changed = match &last {
            Some(prev) => prev != labels,
            None => !labels.is_empty(),
        };
        if changed {
            last = Some(labels.clone());
            events.push(branch.event(model, EventKind::Partial, frames_in as f64 * frame_ms, clock.now_ms()));
        }
    }
    Ok((branch, events))
}

fn high_worker(
    model: &Model,
    store: &ParamStore,
    mut branch: Branch,
    rx: mpsc::Receiver<Block>,
    clock: &WallClock,
) -> tt_core::Result<(Branch, YEvent, usize, f64)> {
    let frame_ms = branch.config().frame_ms;
    for block in rx {
        match block {
            Block::Rows { rows, .. } => {
                branch.consume(model, store, &rows, false)?;
            }
            Block::End { rows, frames_in } => {
                let start = clock.now_ms();
                let flush = branch.consume(model, store, &rows, true)?;
                let end = clock.now_ms();
                let ev = branch.event(model, EventKind::Final, frames_in as f64 * frame_ms, end);
                return Ok((branch, ev, flush, end - start));
            }
        }
    }
    Err(tt_core::Error::State("stream ended without finalize"))
}

/// Streams `x` in chunks of `step` frames through a threaded Y-model.
pub fn run_concurrent(
    model: &Model,
    store: &ParamStore,
    low: &ContextConfig,
    high: &ContextConfig,
    shared: usize,
    x: &Tensor2,
    step: usize,
) -> Result<ConcurrentRun> {
    if step == 0 {
        return Err(CliError::Invalid("step size must be at least 1".into()));
    }
    low.validate(model.depth())?;
    high.validate(model.depth())?;
    check_shared_prefix(low, high, shared)?;
    let mut producer = SharedEncoder::new(model, low, shared)?;
    let low_branch = Branch::new(model, low, shared, BranchKind::Low)?;
    let high_branch = Branch::new(model, high, shared, BranchKind::High)?;
    let clock = WallClock::start();
    let (low_tx, low_rx) = mpsc::channel();
    let (high_tx, high_rx) = mpsc::channel();

    thread::scope(|s| {
        let lw = s.spawn(|| low_worker(model, store, low_branch, low_rx, &clock));
        let hw = s.spawn(|| high_worker(model, store, high_branch, high_rx, &clock));
        let produced = (|| -> tt_core::Result<()> {
            let mut t = 0;
            while t < x.rows() {
                let end = (t + step).min(x.rows());
                let rows = Arc::new(producer.push(model, store, &x.slice_rows(t, end))?);
                t = end;
                let frames_in = producer.frames_in();
                // a closed channel means the worker failed; its error is reported on join
                let _ = low_tx.send(Block::Rows { rows: rows.clone(), frames_in });
                let _ = high_tx.send(Block::Rows { rows, frames_in });
            }
            let rows = Arc::new(producer.finish(model, store)?);
            let frames_in = producer.frames_in();
            let _ = low_tx.send(Block::End { rows: rows.clone(), frames_in });
            let _ = high_tx.send(Block::End { rows, frames_in });
            Ok(())
        })();
        drop(low_tx);
        drop(high_tx);
        let low_out = lw.join().expect("low branch worker panicked");
        let high_out = hw.join().expect("high branch worker panicked");
        produced?;
        let (low_branch, mut events) = low_out?;
        let (high_branch, final_ev, flush_frames, flush_wall_ms) = high_out?;
        events.push(final_ev.clone());
        Ok(ConcurrentRun {
            events,
            result: FinalResult {
                text: final_ev.text,
                hypothesis: high_branch.hypothesis().clone(),
                emission_ms: final_ev.emission_times,
                flush_frames,
                flush_wall_ms,
                low_text: model.config.vocab.decode(&low_branch.hypothesis().labels),
            },
            shared_layer_rows: producer.layer_rows(),
        })
    })
}
