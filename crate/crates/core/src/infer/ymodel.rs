//! Dual-latency decoding: shared causal lower layers feed a low-latency
//! branch that streams partial results and a high-latency branch whose
//! result replaces them at the end of the utterance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cache::LabelCache;
use super::decode::{project_audio, GreedySearch, Hypothesis, ModelScorer};
use super::stream::Pipeline;
use crate::attention::ContextConfig;
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tensor2};
use crate::transducer::{Model, Stage};

/// Wall-clock source in milliseconds; the core crate never reads time itself.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Partial,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YEvent {
    pub stream_time_ms: f64,
    pub wall_time_ms: f64,
    pub branch: BranchKind,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub text: String,
    pub emission_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub text: String,
    pub hypothesis: Hypothesis,
    /// Emission time of each label in milliseconds.
    pub emission_ms: Vec<f64>,
    /// High-branch encoder frames produced by the end-of-stream flush.
    pub flush_frames: usize,
    pub flush_wall_ms: f64,
    /// Last low-branch partial, for comparison.
    pub low_text: String,
}

/// Index into [`crate::transducer::AudioEncoder::stages`] where the
/// branches start: everything through layer `shared − 1` is shared.
pub fn split_point(model: &Model, shared: usize) -> Result<usize> {
    if shared > model.depth() {
        return Err(Error::DepthMismatch {
            expected: model.depth(),
            got: shared,
        });
    }
    let stages = model.encoder.stages();
    if shared == 0 {
        return Ok(1);
    }
    let pos = stages
        .iter()
        .position(|s| *s == Stage::Layer(shared - 1))
        .expect("layer exists");
    Ok(pos + 1)
}

/// Checks the shared-prefix rule: the first `shared` layers are causal and
/// identical in both configurations, and the output delays agree.
pub fn check_shared_prefix(low: &ContextConfig, high: &ContextConfig, shared: usize) -> Result<()> {
    for cfg in [low, high] {
        if let Some(layer) = cfg.right.iter().take(shared).position(|&r| r != 0) {
            return Err(Error::SharedPrefix {
                layer,
                right: cfg.right[layer],
            });
        }
    }
    if let Some(layer) = (0..shared).find(|&i| low.left[i] != high.left[i]) {
        return Err(Error::Invalid(format!(
            "shared layer {layer} has different left contexts in the two branches"
        )));
    }
    if low.output_delay != high.output_delay {
        return Err(Error::Invalid(format!(
            "branches need equal output delay, got {} and {}",
            low.output_delay, high.output_delay
        )));
    }
    Ok(())
}

/// Producer side: input projection and shared lower layers, computed once
/// per frame.
#[derive(Debug, Clone)]
pub struct SharedEncoder {
    pipeline: Pipeline,
    input_dim: usize,
    pad: usize,
    frames_in: usize,
}

impl SharedEncoder {
    pub fn new(model: &Model, cfg: &ContextConfig, shared: usize) -> Result<Self> {
        let split = split_point(model, shared)?;
        Ok(Self {
            pipeline: Pipeline::new(model, cfg, &model.encoder.stages()[..split])?,
            input_dim: model.config.input_dim,
            pad: cfg.output_delay * model.encoder.output_rate(),
            frames_in: 0,
        })
    }

    pub fn frames_in(&self) -> usize {
        self.frames_in
    }

    /// Rows each shared layer has processed.
    pub fn layer_rows(&self) -> Vec<usize> {
        self.pipeline.layer_states().map(|l| l.received()).collect()
    }

    pub fn is_finished(&self) -> bool {
        self.pipeline.is_finished()
    }

    pub fn push(&mut self, model: &Model, store: &ParamStore, frames: &Tensor2) -> Result<Tensor2> {
        if self.pipeline.is_finished() {
            return Err(Error::State("stream already finalized"));
        }
        if frames.cols() != self.input_dim {
            return Err(Error::shape("y_feed frames", self.input_dim, frames.cols()));
        }
        self.frames_in += frames.rows();
        if frames.rows() == 0 {
            return Ok(Tensor2::empty(model.config.d_model));
        }
        self.pipeline.push(model, store, frames, false)
    }

    /// Appends the output-delay padding and flushes.
    pub fn finish(&mut self, model: &Model, store: &ParamStore) -> Result<Tensor2> {
        if self.pipeline.is_finished() {
            return Err(Error::State("stream already finalized"));
        }
        self.pipeline
            .push(model, store, &Tensor2::zeros(self.pad, self.input_dim), true)
    }
}

/// Consumer side: the upper layers under one configuration plus a greedy
/// decoder fed as encoder frames appear.
#[derive(Debug, Clone)]
pub struct Branch {
    pub kind: BranchKind,
    cfg: ContextConfig,
    pipeline: Pipeline,
    to_drop: usize,
    audio: Tensor2,
    search: GreedySearch<Vec<f64>>,
    cache: LabelCache,
}

impl Branch {
    pub fn new(model: &Model, cfg: &ContextConfig, shared: usize, kind: BranchKind) -> Result<Self> {
        let split = split_point(model, shared)?;
        Ok(Self {
            kind,
            cfg: cfg.clone(),
            pipeline: Pipeline::new(model, cfg, &model.encoder.stages()[split..])?,
            to_drop: cfg.output_delay,
            audio: Tensor2::empty(model.config.joint_dim),
            search: GreedySearch::default(),
            cache: LabelCache::new(),
        })
    }

    pub fn config(&self) -> &ContextConfig {
        &self.cfg
    }

    /// Encoder frames produced so far.
    pub fn frames(&self) -> usize {
        self.audio.rows()
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        self.search.hypothesis()
    }

    pub fn cache(&self) -> &LabelCache {
        &self.cache
    }

    /// Runs shared activations through the branch layers and the decoder.
    /// Returns how many new encoder frames were produced.
    pub fn consume(&mut self, model: &Model, store: &ParamStore, shared: &Tensor2, end: bool) -> Result<usize> {
        let mut out = self.pipeline.push(model, store, shared, end)?;
        let drop = self.to_drop.min(out.rows());
        out.drop_front(drop);
        self.to_drop -= drop;
        if out.rows() > 0 {
            self.audio.append(&project_audio(model, store, &out)?)?;
        }
        let mut scorer = ModelScorer::new(model, store, &mut self.cache, &self.audio);
        self.search.advance(&mut scorer, self.audio.rows())?;
        Ok(out.rows())
    }

    pub fn event(&self, model: &Model, kind: EventKind, stream_time_ms: f64, wall_time_ms: f64) -> YEvent {
        YEvent {
            stream_time_ms,
            wall_time_ms,
            branch: self.kind,
            kind,
            text: model.config.vocab.decode(&self.hypothesis().labels),
            emission_times: emission_ms(model, &self.cfg, &self.hypothesis().times),
        }
    }
}

/// Encoder frame indices converted to milliseconds of input audio.
pub fn emission_ms(model: &Model, cfg: &ContextConfig, times: &[usize]) -> Vec<f64> {
    let step = cfg.frame_ms * model.encoder.output_rate() as f64;
    times.iter().map(|&t| t as f64 * step).collect()
}

/// Cooperative Y-model session: each feed advances the shared layers, then
/// the low branch, then the high branch.
pub struct YSession<'m> {
    model: &'m Model,
    store: &'m ParamStore,
    shared_layers: usize,
    shared: SharedEncoder,
    low: Branch,
    high: Branch,
    events: Vec<YEvent>,
    warnings: Vec<String>,
    last_partial: Option<Vec<usize>>,
    last_step: usize,
    finalized: bool,
}

/// Opens a Y-model session. Configurations outside the model's menu are
/// allowed but reported in [`YSession::warnings`].
pub fn y_start<'m>(
    model: &'m Model,
    store: &'m ParamStore,
    low: &ContextConfig,
    high: &ContextConfig,
    shared: usize,
) -> Result<YSession<'m>> {
    low.validate(model.depth())?;
    high.validate(model.depth())?;
    check_shared_prefix(low, high, shared)?;
    let mut warnings = Vec::new();
    for (name, cfg) in [("low", low), ("high", high)] {
        if !crate::train::menu_contains(&model.config, cfg) {
            warnings.push(format!("{name} configuration is not in the model's training menu"));
        }
    }
    Ok(YSession {
        model,
        store,
        shared_layers: shared,
        shared: SharedEncoder::new(model, low, shared)?,
        low: Branch::new(model, low, shared, BranchKind::Low)?,
        high: Branch::new(model, high, shared, BranchKind::High)?,
        events: Vec::new(),
        warnings,
        last_partial: None,
        last_step: 0,
        finalized: false,
    })
}

impl YSession<'_> {
    pub fn shared_layers(&self) -> usize {
        self.shared_layers
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn events(&self) -> &[YEvent] {
        &self.events
    }

    pub fn low(&self) -> &Branch {
        &self.low
    }

    pub fn high(&self) -> &Branch {
        &self.high
    }

    pub fn frames_fed(&self) -> usize {
        self.shared.frames_in()
    }

    /// Rows each shared layer has processed; equals frames fed (plus the
    /// output-delay padding after finalize) when computed exactly once.
    pub fn shared_layer_rows(&self) -> Vec<usize> {
        self.shared.layer_rows()
    }

    /// Encoder frames the high branch trails the low branch by.
    pub fn lag(&self) -> usize {
        self.low.frames().saturating_sub(self.high.frames())
    }

    fn stream_ms(&self) -> f64 {
        self.shared.frames_in() as f64 * self.low.cfg.frame_ms
    }

    fn maybe_partial(&mut self, clock: &dyn Clock) -> Option<YEvent> {
        let labels = &self.low.hypothesis().labels;
        if self.last_partial.as_ref() == Some(labels) || (self.last_partial.is_none() && labels.is_empty()) {
            return None;
        }
        self.last_partial = Some(labels.clone());
        let ev = self
            .low
            .event(self.model, EventKind::Partial, self.stream_ms(), clock.now_ms());
        self.events.push(ev.clone());
        Some(ev)
    }

    /// Feeds input frames; returns the partial-result events they caused.
    pub fn feed(&mut self, frames: &Tensor2, clock: &dyn Clock) -> Result<Vec<YEvent>> {
        if self.finalized {
            return Err(Error::State("feed after finalize"));
        }
        let h = self.shared.push(self.model, self.store, frames)?;
        self.low.consume(self.model, self.store, &h, false)?;
        self.high.consume(self.model, self.store, &h, false)?;
        if frames.rows() > 0 {
            self.last_step = frames.rows();
        }
        Ok(self.maybe_partial(clock).into_iter().collect())
    }

    /// Size of the most recent non-empty feed.
    pub fn last_step(&self) -> usize {
        self.last_step
    }

    /// Ends the stream: flushes both branches over their remaining
    /// lookahead in one batched pass and replaces the partial result with
    /// the high branch's transcript.
    pub fn finalize(&mut self, clock: &dyn Clock) -> Result<FinalResult> {
        if self.finalized {
            return Err(Error::State("session already finalized"));
        }
        self.finalized = true;
        let start = clock.now_ms();
        let h = self.shared.finish(self.model, self.store)?;
        self.low.consume(self.model, self.store, &h, true)?;
        self.maybe_partial(clock);
        let flush_frames = self.high.consume(self.model, self.store, &h, true)?;
        let end = clock.now_ms();
        let ev = self.high.event(self.model, EventKind::Final, self.stream_ms(), end);
        self.events.push(ev.clone());
        Ok(FinalResult {
            text: ev.text,
            hypothesis: self.high.hypothesis().clone(),
            emission_ms: ev.emission_times,
            flush_frames,
            flush_wall_ms: end - start,
            low_text: self.model.config.vocab.decode(&self.low.hypothesis().labels),
        })
    }
}
