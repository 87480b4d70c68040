use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::menu::{sample_config, sample_per_layer, ConfigMenu};
use super::notation::format_rights;
use crate::attention::ContextConfig;
use crate::data::Utterance;
use crate::error::{Error, Result};
use crate::nn::{Adam, Grads, ParamStore};
use crate::rnnt::{constrained_mask, constrained_mask_words, viterbi_alignment, AlignMask, AlignmentPath};
use crate::transducer::Model;

/// Emission window around reference times, in encoder frames. `None` is
/// unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintWindow {
    pub w_left: Option<usize>,
    pub w_right: Option<usize>,
    /// Group tokens into space-separated words sharing one window.
    pub words: bool,
}

impl Default for ConstraintWindow {
    /// Only delay is penalized: unbounded left, two frames right.
    fn default() -> Self {
        Self {
            w_left: None,
            w_right: Some(2),
            words: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LossMode {
    Plain,
    Constrained(ConstraintWindow),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: LossMode,
    /// Rescale the batch gradient to at most this global norm.
    pub clip_norm: Option<f64>,
    /// Experiments only: sample each layer's context independently.
    pub per_layer_sampling: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 8,
            seed: 0,
            mode: LossMode::Plain,
            clip_norm: Some(5.0),
            per_layer_sampling: false,
        }
    }
}

/// Result of one utterance's forward/backward.
#[derive(Debug, Clone)]
pub enum UttOutcome {
    Loss { loss: f64, grads: Grads },
    /// The constraint admitted no alignment.
    Skipped,
}

/// One record per optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub config: String,
    /// Mean loss over the utterances that were not skipped.
    pub loss: f64,
    pub utterances: usize,
    pub skipped: usize,
    pub grad_norm: f64,
}

/// Alignment mask for `utt` from its reference path, sized for the
/// model's encoder output.
pub fn reference_mask(
    model: &Model,
    utt: &Utterance,
    reference: &AlignmentPath,
    window: &ConstraintWindow,
) -> Result<AlignMask> {
    let t_len = utt.frames().div_ceil(model.encoder.output_rate());
    if reference.emissions.iter().any(|&e| e >= t_len) {
        return Err(Error::InfeasibleConstraint);
    }
    if window.words {
        let space = model
            .config
            .vocab
            .space_id()
            .ok_or(Error::Invalid("word windows need a space symbol".into()))?;
        constrained_mask_words(reference, &utt.labels, space, window.w_left, window.w_right, t_len)
    } else {
        constrained_mask(reference, window.w_left, window.w_right, t_len, utt.labels.len())
    }
}

/// Loss and gradient of one utterance under `cfg`. Pure in the model, so
/// utterances of a batch can run in parallel.
pub fn utterance_step(
    model: &Model,
    store: &ParamStore,
    utt: &Utterance,
    cfg: &ContextConfig,
    mode: &LossMode,
    reference: Option<&AlignmentPath>,
) -> Result<UttOutcome> {
    let mask = match mode {
        LossMode::Plain => None,
        LossMode::Constrained(w) => {
            let r = reference.ok_or_else(|| {
                Error::Invalid(alloc::format!("no reference alignment for utterance {:?}", utt.id))
            })?;
            match reference_mask(model, utt, r, w) {
                Ok(m) => Some(m),
                Err(Error::InfeasibleConstraint) => return Ok(UttOutcome::Skipped),
                Err(e) => return Err(e),
            }
        }
    };
    let mut grads = Grads::zeros_like(store);
    match model.loss_and_grad(store, &mut grads, &utt.features, &utt.labels, cfg, mask.as_ref()) {
        Ok(loss) => Ok(UttOutcome::Loss { loss, grads }),
        Err(Error::InfeasibleConstraint) => Ok(UttOutcome::Skipped),
        Err(e) => Err(e),
    }
}

/// Viterbi emission times of each utterance's labels under `cfg`, keyed by
/// utterance id.
pub fn reference_alignments(
    model: &Model,
    store: &ParamStore,
    utts: &[Utterance],
    cfg: &ContextConfig,
) -> Result<BTreeMap<String, AlignmentPath>> {
    let mut out = BTreeMap::new();
    for u in utts {
        let lat = model.logits_grid(store, &u.features, &u.labels, cfg, None)?;
        out.insert(u.id.clone(), viterbi_alignment(&lat, &u.labels)?);
    }
    Ok(out)
}

/// Alignments that emit each label on the first frame of its span, from the
/// dataset's onset times. Useful to anchor a full-context model to the
/// true timing before it serves as a reference.
pub fn onset_alignments(model: &Model, utts: &[Utterance]) -> Result<BTreeMap<String, AlignmentPath>> {
    let rate = model.encoder.output_rate();
    let mut out = BTreeMap::new();
    for u in utts {
        if u.ref_times.len() != u.labels.len() {
            return Err(Error::Invalid(alloc::format!(
                "utterance {:?} has {} onset times for {} labels",
                u.id,
                u.ref_times.len(),
                u.labels.len()
            )));
        }
        let emissions = u.ref_times.iter().map(|&t| t / rate).collect();
        out.insert(
            u.id.clone(),
            AlignmentPath {
                emissions,
                log_prob: 0.0,
            },
        );
    }
    Ok(out)
}

/// Training loop state: the model being trained, its optimizer and the
/// seeded RNGs for config sampling and batch order.
pub struct Trainer {
    pub model: Model,
    pub store: ParamStore,
    pub menu: ConfigMenu,
    pub options: TrainOptions,
    references: BTreeMap<String, AlignmentPath>,
    adam: Adam,
    config_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    step: u64,
    skipped: usize,
}

impl Trainer {
    pub fn new(model: Model, store: ParamStore, menu: ConfigMenu, options: TrainOptions) -> Result<Self> {
        if options.batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        for cfg in menu.entries() {
            cfg.validate(model.depth())?;
        }
        let mut config_rng = ChaCha8Rng::seed_from_u64(options.seed);
        config_rng.set_stream(1);
        let mut batch_rng = ChaCha8Rng::seed_from_u64(options.seed);
        batch_rng.set_stream(2);
        Ok(Self {
            adam: Adam::new(&store, options.lr),
            model,
            store,
            menu,
            options,
            references: BTreeMap::new(),
            config_rng,
            batch_rng,
            order: Vec::new(),
            cursor: 0,
            step: 0,
            skipped: 0,
        })
    }

    /// Reference alignments for constrained mode, keyed by utterance id.
    pub fn set_references(&mut self, refs: BTreeMap<String, AlignmentPath>) {
        self.references = refs;
    }

    pub fn reference(&self, id: &str) -> Option<&AlignmentPath> {
        self.references.get(id)
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    /// Utterances skipped for infeasible constraints so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Context configuration for the next batch.
    pub fn sample(&mut self) -> ContextConfig {
        if self.options.per_layer_sampling {
            sample_per_layer(&self.menu, &mut self.config_rng)
        } else {
            sample_config(&self.menu, &mut self.config_rng).clone()
        }
    }

    /// Indices of the next batch; every utterance is visited once per
    /// shuffled epoch.
    pub fn next_batch(&mut self, n_data: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.options.batch_size);
        if n_data == 0 {
            return out;
        }
        while out.len() < self.options.batch_size.min(n_data) {
            if self.cursor >= self.order.len() || self.order.len() != n_data {
                self.order = (0..n_data).collect();
                self.order.shuffle(&mut self.batch_rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// Averages the outcomes (in order) and takes one optimizer step.
    pub fn apply(&mut self, cfg: &ContextConfig, outcomes: Vec<UttOutcome>) -> Result<StepReport> {
        let total = outcomes.len();
        let mut acc = Grads::zeros_like(&self.store);
        let (mut loss, mut used) = (0.0, 0);
        for o in outcomes {
            if let UttOutcome::Loss { loss: l, grads } = o {
                if !l.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                acc.add(&grads)?;
                loss += l;
                used += 1;
            }
        }
        self.skipped += total - used;
        self.step += 1;
        let mut grad_norm = 0.0;
        if used > 0 {
            acc.scale(1.0 / used as f64);
            grad_norm = acc.global_norm();
            if let Some(c) = self.options.clip_norm {
                if grad_norm > c {
                    acc.scale(c / grad_norm);
                }
            }
            self.store.grads = acc;
            let g = core::mem::take(&mut self.store.grads);
            self.adam.step(&mut self.store, &g);
            self.store.grads = g;
        }
        Ok(StepReport {
            step: self.step,
            config: format_rights(&cfg.right),
            loss: if used > 0 { loss / used as f64 } else { f64::NAN },
            utterances: used,
            skipped: total - used,
            grad_norm,
        })
    }

    /// Samples a config and trains on `batch` sequentially.
    pub fn train_step(&mut self, batch: &[&Utterance]) -> Result<StepReport> {
        let cfg = self.sample();
        let mut outcomes = Vec::with_capacity(batch.len());
        for u in batch {
            outcomes.push(utterance_step(
                &self.model,
                &self.store,
                u,
                &cfg,
                &self.options.mode,
                self.references.get(&u.id),
            )?);
        }
        self.apply(&cfg, outcomes)
    }

    /// Runs `steps` steps over `data`, reporting each step to `log`.
    pub fn fit(&mut self, data: &[Utterance], steps: usize, mut log: impl FnMut(&StepReport)) -> Result<f64> {
        let mut last = f64::NAN;
        for _ in 0..steps {
            let idx = self.next_batch(data.len());
            let batch: Vec<&Utterance> = idx.iter().map(|&i| &data[i]).collect();
            let r = self.train_step(&batch)?;
            last = r.loss;
            log(&r);
        }
        Ok(last)
    }
}
