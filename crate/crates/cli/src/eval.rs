//! Corpus-level evaluation: decoding accuracy and alignment delay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tt_core::attention::ContextConfig;
use tt_core::data::Utterance;
use tt_core::infer::{beam_decode, emission_ms, greedy_decode, Hypothesis, LabelCache};
use tt_core::metrics::{timed_words, DelayReport, ErrorTally, TimedWord};
use tt_core::nn::ParamStore;
use tt_core::rnnt::viterbi_alignment;
use tt_core::transducer::Model;

use crate::error::Result;

/// Greedy (`beam <= 1`) or beam decode of every utterance, in order.
pub fn decode_all(
    model: &Model,
    store: &ParamStore,
    utts: &[Utterance],
    cfg: &ContextConfig,
    beam: usize,
) -> Result<Vec<Hypothesis>> {
    utts.par_iter()
        .map(|u| {
            let enc = model.audio_encode(store, &u.features, cfg)?;
            let mut cache = LabelCache::new();
            Ok(if beam <= 1 {
                greedy_decode(model, store, &enc, &mut cache)?
            } else {
                beam_decode(model, store, &enc, beam, &mut cache)?.swap_remove(0)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    pub utterances: usize,
    pub token_accuracy: f64,
    pub wer: f64,
}

pub fn tally(model: &Model, utts: &[Utterance], hyps: &[Hypothesis]) -> ErrorTally {
    let vocab = &model.config.vocab;
    let mut t = ErrorTally::default();
    for (u, h) in utts.iter().zip(hyps) {
        t.add(&u.labels, &h.labels, &vocab.decode(&u.labels), &vocab.decode(&h.labels));
    }
    t
}

/// Decodes `utts` under `cfg` and scores the transcripts.
pub fn evaluate(model: &Model, store: &ParamStore, utts: &[Utterance], cfg: &ContextConfig, beam: usize) -> Result<EvalReport> {
    let hyps = decode_all(model, store, utts, cfg, beam)?;
    let t = tally(model, utts, &hyps);
    Ok(EvalReport {
        config: tt_core::train::format_rights(&cfg.right),
        utterances: utts.len(),
        token_accuracy: t.token_accuracy(),
        wer: t.wer(),
    })
}

/// Words of `labels` timed by their emission frames (ms of input audio).
pub fn words_at(model: &Model, cfg: &ContextConfig, labels: &[usize], frames: &[usize]) -> Vec<TimedWord> {
    let symbols: Vec<&str> = labels
        .iter()
        .map(|&l| model.config.vocab.symbol(l).unwrap_or(""))
        .collect();
    timed_words(&symbols, &emission_ms(model, cfg, frames))
}

/// Words of each utterance's true transcript timed by the model's best
/// (Viterbi) alignment of that transcript.
pub fn forced_words(model: &Model, store: &ParamStore, utts: &[Utterance], cfg: &ContextConfig) -> Result<Vec<Vec<TimedWord>>> {
    utts.par_iter()
        .map(|u| {
            let lat = model.logits_grid(store, &u.features, &u.labels, cfg, None)?;
            let path = viterbi_alignment(&lat, &u.labels)?;
            Ok(words_at(model, cfg, &u.labels, &path.emissions))
        })
        .collect()
}

/// How word times are obtained from the evaluated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelaySource {
    /// Viterbi alignment of the true transcript: every word pairs.
    Forced,
    /// Greedy decode; words pair by minimal edit alignment.
    Decoded,
}

/// Alignment delay of `model` under `cfg` against the reference model's
/// forced alignment under `ref_cfg`.
#[allow(clippy::too_many_arguments)]
pub fn delay_report(
    model: &Model,
    store: &ParamStore,
    cfg: &ContextConfig,
    reference: (&Model, &ParamStore, &ContextConfig),
    utts: &[Utterance],
    source: DelaySource,
) -> Result<DelayReport> {
    let (rm, rs, rcfg) = reference;
    let ref_words = forced_words(rm, rs, utts, rcfg)?;
    let hyp_words = match source {
        DelaySource::Forced => forced_words(model, store, utts, cfg)?,
        DelaySource::Decoded => decode_all(model, store, utts, cfg, 1)?
            .iter()
            .map(|h| words_at(model, cfg, &h.labels, &h.times))
            .collect(),
    };
    let pairs: Vec<_> = ref_words.into_iter().zip(hyp_words).collect();
    Ok(DelayReport::from_pairs(&pairs)?)
}
