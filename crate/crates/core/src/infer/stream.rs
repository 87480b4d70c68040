//! Stateful batch-step encoding.
//!
//! Each encoder stage keeps just enough state to emit output rows as soon
//! as their right context has arrived. Every stage is row-wise except the
//! attention weights, which read cached keys/values, so the streamed rows
//! reproduce the offline encode exactly.

use alloc::vec::Vec;

use crate::attention::ContextConfig;
use crate::error::{Error, Result};
use crate::nn::ops::{layer_norm, linear};
use crate::nn::{ParamStore, Tensor2, NORM_EPS};
use crate::transducer::{Model, Stage};

/// Streaming state of one transformer layer.
#[derive(Debug, Clone)]
pub struct LayerState {
    layer: usize,
    left: Option<usize>,
    right: usize,
    received: usize,
    emitted: usize,
    /// Absolute frame index of the first cached key/value row.
    k_start: usize,
    k: Tensor2,
    v: Tensor2,
    /// Queries and residual inputs of rows still waiting for right context.
    q: Tensor2,
    x: Tensor2,
    peak_history: usize,
}

impl LayerState {
    fn new(layer: usize, d: usize, left: Option<usize>, right: usize) -> Self {
        Self {
            layer,
            left,
            right,
            received: 0,
            emitted: 0,
            k_start: 0,
            k: Tensor2::empty(d),
            v: Tensor2::empty(d),
            q: Tensor2::empty(d),
            x: Tensor2::empty(d),
            peak_history: 0,
        }
    }

    /// Absolute frame offset of the cache start.
    pub fn cache_start(&self) -> usize {
        self.k_start
    }

    /// Cached rows that precede the next output frame.
    pub fn history_len(&self) -> usize {
        self.emitted - self.k_start
    }

    /// Largest [`LayerState::history_len`] seen so far.
    pub fn peak_history(&self) -> usize {
        self.peak_history
    }

    /// Rows this layer has been fed.
    pub fn received(&self) -> usize {
        self.received
    }

    pub fn pending(&self) -> usize {
        self.received - self.emitted
    }

    fn push(&mut self, model: &Model, store: &ParamStore, x: &Tensor2, end: bool) -> Result<Tensor2> {
        let layer = &model.encoder.layers[self.layer];
        if x.rows() > 0 {
            let (q, k, v) = layer.qkv(store, x)?;
            self.k.append(&k)?;
            self.v.append(&v)?;
            self.q.append(&q)?;
            self.x.append(x)?;
            self.received += x.rows();
        }
        let limit = if end {
            self.received
        } else {
            self.received.saturating_sub(self.right)
        };
        if limit <= self.emitted {
            return Ok(Tensor2::empty(self.x.cols()));
        }
        let m = limit - self.emitted;
        let (concat, _) = layer.attn.attend_window(
            store,
            &self.q.slice_rows(0, m),
            self.emitted,
            &self.k,
            &self.v,
            self.k_start,
            self.received,
            self.left,
            self.right,
        )?;
        let y = layer.finish(store, &self.x.slice_rows(0, m), &concat)?;
        self.q.drop_front(m);
        self.x.drop_front(m);
        self.emitted = limit;
        if let Some(l) = self.left {
            let keep_from = self.emitted.saturating_sub(l);
            if keep_from > self.k_start {
                self.k.drop_front(keep_from - self.k_start);
                self.v.drop_front(keep_from - self.k_start);
                self.k_start = keep_from;
            }
        }
        self.peak_history = self.peak_history.max(self.history_len());
        Ok(y)
    }
}

#[derive(Debug, Clone)]
enum StageState {
    Input,
    Layer(LayerState),
    Stack { buf: Tensor2 },
    Norm,
}

/// A contiguous run of encoder stages driven incrementally.
#[derive(Debug, Clone)]
pub struct Pipeline {
    stages: Vec<StageState>,
    finished: bool,
}

impl Pipeline {
    /// Pipeline over `stages`, taking each layer's context from `cfg`.
    pub fn new(model: &Model, cfg: &ContextConfig, stages: &[Stage]) -> Result<Self> {
        cfg.validate(model.depth())?;
        let d = model.config.d_model;
        let stages = stages
            .iter()
            .map(|s| match *s {
                Stage::InputProj => StageState::Input,
                Stage::Layer(i) => StageState::Layer(LayerState::new(i, d, cfg.left[i], cfg.right[i])),
                Stage::Stack => StageState::Stack {
                    buf: Tensor2::empty(d),
                },
                Stage::FinalNorm => StageState::Norm,
            })
            .collect();
        Ok(Self {
            stages,
            finished: false,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn layer_states(&self) -> impl Iterator<Item = &LayerState> {
        self.stages.iter().filter_map(|s| match s {
            StageState::Layer(l) => Some(l),
            _ => None,
        })
    }

    /// Feeds rows through every stage; `end` flushes all pending rows.
    pub fn push(&mut self, model: &Model, store: &ParamStore, x: &Tensor2, end: bool) -> Result<Tensor2> {
        if self.finished {
            return Err(Error::State("pipeline already flushed"));
        }
        let mut h = x.clone();
        for stage in &mut self.stages {
            h = match stage {
                StageState::Input => {
                    let p = model.encoder.input;
                    if h.rows() == 0 {
                        Tensor2::empty(model.config.d_model)
                    } else {
                        linear(&h, store.get(p.w), store.vec(p.b))?
                    }
                }
                StageState::Layer(l) => l.push(model, store, &h, end)?,
                StageState::Stack { buf } => {
                    let (_, factor, proj) = model.encoder.stack.ok_or(Error::State("model has no stacking stage"))?;
                    buf.append(&h)?;
                    let mut full = buf.rows() / factor;
                    if end && buf.rows() % factor != 0 {
                        full += 1;
                    }
                    let width = buf.cols() * factor;
                    let mut stacked = Tensor2::zeros(full, width);
                    for i in 0..full {
                        for j in 0..factor {
                            let r = i * factor + j;
                            if r < buf.rows() {
                                let cols = buf.cols();
                                stacked.row_mut(i)[j * cols..(j + 1) * cols].copy_from_slice(buf.row(r));
                            }
                        }
                    }
                    buf.drop_front((full * factor).min(buf.rows()));
                    if full == 0 {
                        Tensor2::empty(model.config.d_model)
                    } else {
                        linear(&stacked, store.get(proj.w), store.vec(proj.b))?
                    }
                }
                StageState::Norm => {
                    let n = model.encoder.final_norm;
                    if h.rows() == 0 {
                        h
                    } else {
                        layer_norm(&h, store.vec(n.gain), store.vec(n.bias), NORM_EPS)?
                    }
                }
            };
        }
        if end {
            self.finished = true;
        }
        Ok(h)
    }
}

/// Streaming encoder state for one utterance.
#[derive(Debug, Clone)]
pub struct StreamState {
    pipeline: Pipeline,
    cfg: ContextConfig,
    input_dim: usize,
    rate: usize,
    /// Leading outputs still to be discarded for the output delay.
    to_drop: usize,
    consumed: usize,
    emitted: usize,
}

impl StreamState {
    pub fn new(model: &Model, cfg: &ContextConfig) -> Result<Self> {
        Ok(Self {
            pipeline: Pipeline::new(model, cfg, &model.encoder.stages())?,
            cfg: cfg.clone(),
            input_dim: model.config.input_dim,
            rate: model.encoder.output_rate(),
            to_drop: cfg.output_delay,
            consumed: 0,
            emitted: 0,
        })
    }

    pub fn config(&self) -> &ContextConfig {
        &self.cfg
    }

    /// Input frames accepted so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Encoder frames returned so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn is_finished(&self) -> bool {
        self.pipeline.is_finished()
    }

    pub fn layer_states(&self) -> impl Iterator<Item = &LayerState> {
        self.pipeline.layer_states()
    }

    /// Encodes `frames` and returns every output whose right context is
    /// now complete.
    pub fn batch_step(&mut self, model: &Model, store: &ParamStore, frames: &Tensor2) -> Result<Tensor2> {
        if frames.cols() != self.input_dim {
            return Err(Error::shape("batch_step frames", self.input_dim, frames.cols()));
        }
        if frames.rows() == 0 {
            return Ok(Tensor2::empty(model.config.d_model));
        }
        let out = self.pipeline.push(model, store, frames, false)?;
        self.consumed += frames.rows();
        Ok(self.take(out))
    }

    /// Ends the stream: appends the output-delay padding and flushes
    /// every pending frame.
    pub fn finish(&mut self, model: &Model, store: &ParamStore) -> Result<Tensor2> {
        let pad = Tensor2::zeros(self.cfg.output_delay * self.rate, self.input_dim);
        let out = self.pipeline.push(model, store, &pad, true)?;
        Ok(self.take(out))
    }

    fn take(&mut self, mut out: Tensor2) -> Tensor2 {
        let drop = self.to_drop.min(out.rows());
        out.drop_front(drop);
        self.to_drop -= drop;
        self.emitted += out.rows();
        out
    }
}

/// Streams `x` through [`StreamState`] in chunks of `step` frames and
/// concatenates the outputs.
pub fn stream_encode(
    model: &Model,
    store: &ParamStore,
    x: &Tensor2,
    cfg: &ContextConfig,
    step: usize,
) -> Result<Tensor2> {
    if step == 0 {
        return Err(Error::Invalid("step size must be at least 1".into()));
    }
    let mut state = StreamState::new(model, cfg)?;
    let mut out = Tensor2::empty(model.config.d_model);
    let mut t = 0;
    while t < x.rows() {
        let end = (t + step).min(x.rows());
        out.append(&state.batch_step(model, store, &x.slice_rows(t, end))?)?;
        t = end;
    }
    out.append(&state.finish(model, store)?)?;
    Ok(out)
}
