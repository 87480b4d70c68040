//! Error rates, alignment delay and real-time factor.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edit operations of a minimal alignment between two sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    Del,
    Ins,
}

/// Minimal edit script, ties broken toward match/substitution, then
/// deletion, then insertion.
fn edit_script<T: PartialEq>(r: &[T], h: &[T]) -> Vec<(Op, usize, usize)> {
    let (n, m) = (r.len(), h.len());
    let mut d = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        d[idx(i, 0)] = i;
    }
    for j in 0..=m {
        d[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[idx(i - 1, j - 1)] + usize::from(r[i - 1] != h[j - 1]);
            d[idx(i, j)] = sub.min(d[idx(i - 1, j)] + 1).min(d[idx(i, j - 1)] + 1);
        }
    }
    let mut ops = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && d[idx(i, j)] == d[idx(i - 1, j - 1)] + usize::from(r[i - 1] != h[j - 1]) {
            let op = if r[i - 1] == h[j - 1] { Op::Match } else { Op::Sub };
            ops.push((op, i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if i > 0 && d[idx(i, j)] == d[idx(i - 1, j)] + 1 {
            ops.push((Op::Del, i - 1, j));
            i -= 1;
        } else {
            ops.push((Op::Ins, i, j - 1));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn edit_counts<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let mut c = EditCounts::default();
    for (op, _, _) in edit_script(reference, hyp) {
        match op {
            Op::Match => {}
            Op::Sub => c.substitutions += 1,
            Op::Del => c.deletions += 1,
            Op::Ins => c.insertions += 1,
        }
    }
    c
}

/// `(S + D + I) / len(ref)`. An empty reference counts each inserted word
/// against a denominator of 1.
pub fn wer<T: PartialEq>(reference: &[T], hyp: &[T]) -> f64 {
    let e = edit_counts(reference, hyp).total() as f64;
    e / reference.len().max(1) as f64
}

/// Whitespace-separated words of a transcript.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Corpus-level token and word error tallies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorTally {
    pub token_edits: usize,
    pub tokens: usize,
    pub word_edits: usize,
    pub words: usize,
    pub utterances: usize,
}

impl ErrorTally {
    pub fn add(&mut self, ref_tokens: &[usize], hyp_tokens: &[usize], ref_text: &str, hyp_text: &str) {
        self.token_edits += edit_counts(ref_tokens, hyp_tokens).total();
        self.tokens += ref_tokens.len();
        let (rw, hw) = (words(ref_text), words(hyp_text));
        self.word_edits += edit_counts(&rw, &hw).total();
        self.words += rw.len();
        self.utterances += 1;
    }

    /// `1 − token edits / reference tokens`.
    pub fn token_accuracy(&self) -> f64 {
        1.0 - self.token_edits as f64 / self.tokens.max(1) as f64
    }

    pub fn wer(&self) -> f64 {
        self.word_edits as f64 / self.words.max(1) as f64
    }
}

/// Mean of `hyp − ref` over paired times; positive means the evaluated
/// model emits later than the reference.
pub fn alignment_delay(ref_times: &[f64], hyp_times: &[f64]) -> Result<f64> {
    if ref_times.len() != hyp_times.len() {
        return Err(Error::LengthMismatch {
            left: ref_times.len(),
            right: hyp_times.len(),
        });
    }
    if ref_times.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = ref_times.iter().zip(hyp_times).map(|(r, h)| h - r).sum();
    Ok(sum / ref_times.len() as f64)
}

/// A word and the time (ms) it was emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub word: String,
    pub time_ms: f64,
}

/// Groups tokens into space-separated words, timing each word by its last
/// token's emission.
pub fn timed_words(symbols: &[&str], times_ms: &[f64]) -> Vec<TimedWord> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut last = 0.0;
    for (s, &t) in symbols.iter().zip(times_ms) {
        if s.trim().is_empty() {
            if !cur.is_empty() {
                out.push(TimedWord {
                    word: core::mem::take(&mut cur),
                    time_ms: last,
                });
            }
        } else {
            cur.push_str(s);
            last = t;
        }
    }
    if !cur.is_empty() {
        out.push(TimedWord { word: cur, time_ms: last });
    }
    out
}

/// Reference and hypothesis times of words paired by a minimal edit
/// alignment. Matched and substituted words pair up; inserted and deleted
/// words are counted and skipped.
pub fn pair_words(reference: &[TimedWord], hyp: &[TimedWord]) -> (Vec<f64>, Vec<f64>, usize) {
    let r: Vec<&str> = reference.iter().map(|w| w.word.as_str()).collect();
    let h: Vec<&str> = hyp.iter().map(|w| w.word.as_str()).collect();
    let (mut rt, mut ht, mut skipped) = (Vec::new(), Vec::new(), 0);
    for (op, i, j) in edit_script(&r, &h) {
        match op {
            Op::Match | Op::Sub => {
                rt.push(reference[i].time_ms);
                ht.push(hyp[j].time_ms);
            }
            Op::Del | Op::Ins => skipped += 1,
        }
    }
    (rt, ht, skipped)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayReport {
    /// Mean delay of each utterance (0 for utterances with no paired word).
    pub per_utterance_ms: Vec<f64>,
    /// Word-weighted corpus mean.
    pub mean_ms: f64,
    pub words: usize,
    pub skipped_words: usize,
}

impl DelayReport {
    /// Corpus report from per-utterance word lists.
    pub fn from_pairs(pairs: &[(Vec<TimedWord>, Vec<TimedWord>)]) -> Result<Self> {
        let mut rep = DelayReport::default();
        let mut total = 0.0;
        for (r, h) in pairs {
            let (rt, ht, skipped) = pair_words(r, h);
            let d = alignment_delay(&rt, &ht)?;
            rep.per_utterance_ms.push(d);
            total += d * rt.len() as f64;
            rep.words += rt.len();
            rep.skipped_words += skipped;
        }
        rep.mean_ms = if rep.words == 0 { 0.0 } else { total / rep.words as f64 };
        Ok(rep)
    }

    /// Mean delay printed like `767msec`.
    pub fn display_mean(&self) -> String {
        alloc::format!("{:.0}msec", self.mean_ms)
    }
}

/// Real-time factor: processing time over audio duration.
pub fn rtf(wall_seconds: f64, audio_seconds: f64) -> Result<f64> {
    if !(audio_seconds > 0.0) {
        return Err(Error::Invalid("audio duration must be positive".into()));
    }
    Ok(wall_seconds / audio_seconds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    /// Whole-utterance masked attention.
    Training,
    QuerySlice,
    BatchStep,
}

impl core::fmt::Display for BenchMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            BenchMode::Training => "training",
            BenchMode::QuerySlice => "query-slice",
            BenchMode::BatchStep => "batch-step",
        })
    }
}

impl core::str::FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(BenchMode::Training),
            "query-slice" => Ok(BenchMode::QuerySlice),
            "batch-step" => Ok(BenchMode::BatchStep),
            _ => Err(Error::Invalid(alloc::format!("unknown bench mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub step: usize,
    pub audio_seconds: f64,
    pub wall_seconds: f64,
    pub rtf: f64,
    pub frames_out: usize,
}

impl BenchRow {
    pub fn new(mode: BenchMode, step: usize, audio_seconds: f64, wall_seconds: f64, frames_out: usize) -> Result<Self> {
        Ok(Self {
            mode,
            step,
            audio_seconds,
            wall_seconds,
            rtf: rtf(wall_seconds, audio_seconds)?,
            frames_out,
        })
    }
}

/// Median of a non-empty sample.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}
