//! Greedy and beam transducer search.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::cache::LabelCache;
use crate::error::{Error, Result};
use crate::nn::ops::{log_add, log_softmax_in_place};
use crate::nn::{ParamStore, Tensor2};
use crate::transducer::{Model, BLANK};

/// Per-frame symbol cap that guarantees termination.
pub const MAX_SYMBOLS_PER_FRAME: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    /// Encoder frame at which each label was emitted.
    pub times: Vec<usize>,
    pub score: f64,
    /// Label context the label encoder reads for the next step.
    pub key: Vec<usize>,
}

impl Hypothesis {
    fn empty(key: Vec<usize>) -> Self {
        Self {
            labels: Vec::new(),
            times: Vec::new(),
            score: 0.0,
            key,
        }
    }
}

/// Source of output distributions for the search.
pub trait Scorer {
    /// Whatever the scorer needs to remember about a label prefix.
    type State: Clone;

    fn label_state(&mut self, labels: &[usize]) -> Result<Self::State>;

    /// Log-probabilities over the vocabulary at encoder frame `t`.
    fn log_probs(&mut self, t: usize, state: &Self::State) -> Result<Vec<f64>>;

    fn key(&self, labels: &[usize]) -> Vec<usize> {
        labels.to_vec()
    }
}

/// Scores with a model's joint network over projected encoder frames,
/// running the label encoder through a [`LabelCache`].
pub struct ModelScorer<'a> {
    model: &'a Model,
    store: &'a ParamStore,
    cache: &'a mut LabelCache,
    audio: &'a Tensor2,
}

impl<'a> ModelScorer<'a> {
    /// `audio` holds encoder frames already passed through the joint's
    /// audio projection (see [`project_audio`]).
    pub fn new(model: &'a Model, store: &'a ParamStore, cache: &'a mut LabelCache, audio: &'a Tensor2) -> Self {
        Self {
            model,
            store,
            cache,
            audio,
        }
    }
}

/// Joint audio projection of encoder frames.
pub fn project_audio(model: &Model, store: &ParamStore, enc: &Tensor2) -> Result<Tensor2> {
    if enc.rows() == 0 {
        return Ok(Tensor2::empty(model.config.joint_dim));
    }
    model.joint.project_audio(store, enc)
}

impl Scorer for ModelScorer<'_> {
    type State = Vec<f64>;

    fn label_state(&mut self, labels: &[usize]) -> Result<Vec<f64>> {
        let l = self.cache.encode(self.model, self.store, labels)?;
        self.model.joint.project_label(self.store, &l)
    }

    fn log_probs(&mut self, t: usize, state: &Vec<f64>) -> Result<Vec<f64>> {
        if t >= self.audio.rows() {
            return Err(Error::State("frame not yet encoded"));
        }
        let mut lp = self.model.joint.logits_projected(self.store, self.audio.row(t), state)?;
        log_softmax_in_place(&mut lp)?;
        Ok(lp)
    }

    fn key(&self, labels: &[usize]) -> Vec<usize> {
        self.model.label.key(labels)
    }
}

/// Index of the first maximum; ties go to the lowest id, i.e. blank.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Greedy search that can be advanced as encoder frames arrive.
#[derive(Debug, Clone)]
pub struct GreedySearch<S> {
    hyp: Hypothesis,
    state: Option<S>,
    next_frame: usize,
    cap: usize,
}

impl<S: Clone> Default for GreedySearch<S> {
    fn default() -> Self {
        Self::new(MAX_SYMBOLS_PER_FRAME)
    }
}

impl<S: Clone> GreedySearch<S> {
    pub fn new(cap: usize) -> Self {
        Self {
            hyp: Hypothesis::empty(Vec::new()),
            state: None,
            next_frame: 0,
            cap,
        }
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        &self.hyp
    }

    pub fn into_hypothesis(self) -> Hypothesis {
        self.hyp
    }

    /// Frames consumed so far.
    pub fn frames(&self) -> usize {
        self.next_frame
    }

    /// Consumes frames up to (not including) `until`.
    pub fn advance<C: Scorer<State = S>>(&mut self, scorer: &mut C, until: usize) -> Result<()> {
        if self.state.is_none() {
            self.state = Some(scorer.label_state(&[])?);
            self.hyp.key = scorer.key(&[]);
        }
        while self.next_frame < until {
            let t = self.next_frame;
            let mut emitted = 0;
            loop {
                let state = self.state.as_ref().expect("initialized above");
                let lp = scorer.log_probs(t, state)?;
                let k = argmax(&lp);
                self.hyp.score += lp[k];
                if k == BLANK {
                    break;
                }
                self.hyp.labels.push(k);
                self.hyp.times.push(t);
                self.state = Some(scorer.label_state(&self.hyp.labels)?);
                emitted += 1;
                if emitted >= self.cap {
                    break;
                }
            }
            self.next_frame += 1;
        }
        self.hyp.key = scorer.key(&self.hyp.labels);
        Ok(())
    }
}

/// Greedy search over frames `[0, t_len)`.
pub fn greedy_search<C: Scorer>(scorer: &mut C, t_len: usize, cap: usize) -> Result<Hypothesis> {
    let mut g = GreedySearch::new(cap);
    g.advance(scorer, t_len)?;
    Ok(g.into_hypothesis())
}

#[derive(Clone)]
struct Beam<S> {
    hyp: Hypothesis,
    state: S,
}

struct Candidate {
    parent: usize,
    /// `None` closes the frame with a blank.
    token: Option<usize>,
    score: f64,
}

fn by_score_desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Beam search: within a frame, expand up to `cap` symbols keeping the best
/// `beam` candidates per expansion; at the frame end merge identical label
/// sequences and keep the best `beam`. With `beam = 1` this is exactly
/// [`greedy_search`].
pub fn beam_search<C: Scorer>(scorer: &mut C, t_len: usize, beam: usize, cap: usize) -> Result<Vec<Hypothesis>> {
    if beam == 0 {
        return Err(Error::Invalid("beam must be at least 1".into()));
    }
    let mut hyps = alloc::vec![Beam {
        hyp: Hypothesis::empty(scorer.key(&[])),
        state: scorer.label_state(&[])?,
    }];
    for t in 0..t_len {
        let mut done: Vec<Beam<C::State>> = Vec::new();
        let mut active = core::mem::take(&mut hyps);
        for step in 0..=cap {
            if active.is_empty() {
                break;
            }
            if step == cap {
                done.append(&mut active);
                break;
            }
            let mut cands = Vec::new();
            for (i, b) in active.iter().enumerate() {
                let lp = scorer.log_probs(t, &b.state)?;
                cands.push(Candidate {
                    parent: i,
                    token: None,
                    score: b.hyp.score + lp[BLANK],
                });
                for (k, p) in lp.iter().enumerate().skip(1) {
                    cands.push(Candidate {
                        parent: i,
                        token: Some(k),
                        score: b.hyp.score + p,
                    });
                }
            }
            cands.sort_by(|a, b| by_score_desc(a.score, b.score));
            cands.truncate(beam);
            let mut next = Vec::new();
            for c in cands {
                let parent = &active[c.parent];
                match c.token {
                    None => {
                        let mut b = parent.clone();
                        b.hyp.score = c.score;
                        done.push(b);
                    }
                    Some(k) => {
                        let mut hyp = parent.hyp.clone();
                        hyp.labels.push(k);
                        hyp.times.push(t);
                        hyp.score = c.score;
                        hyp.key = scorer.key(&hyp.labels);
                        let state = scorer.label_state(&hyp.labels)?;
                        next.push(Beam { hyp, state });
                    }
                }
            }
            active = next;
        }
        hyps = merge(done);
        hyps.sort_by(|a, b| by_score_desc(a.hyp.score, b.hyp.score));
        hyps.truncate(beam);
    }
    Ok(hyps.into_iter().map(|b| b.hyp).collect())
}

/// Collapses beams with identical labels, summing their probabilities and
/// keeping the timing of the most probable one.
fn merge<S>(beams: Vec<Beam<S>>) -> Vec<Beam<S>> {
    let mut out: Vec<Beam<S>> = Vec::with_capacity(beams.len());
    for b in beams {
        match out.iter_mut().find(|o| o.hyp.labels == b.hyp.labels) {
            Some(o) => {
                let total = log_add(o.hyp.score, b.hyp.score);
                if b.hyp.score > o.hyp.score {
                    *o = b;
                }
                o.hyp.score = total;
            }
            None => out.push(b),
        }
    }
    out
}

/// Greedy decode of encoder frames.
pub fn greedy_decode(model: &Model, store: &ParamStore, enc: &Tensor2, cache: &mut LabelCache) -> Result<Hypothesis> {
    let audio = project_audio(model, store, enc)?;
    let mut scorer = ModelScorer::new(model, store, cache, &audio);
    greedy_search(&mut scorer, enc.rows(), MAX_SYMBOLS_PER_FRAME)
}

/// Beam decode of encoder frames; the n-best list is sorted by score.
pub fn beam_decode(
    model: &Model,
    store: &ParamStore,
    enc: &Tensor2,
    beam: usize,
    cache: &mut LabelCache,
) -> Result<Vec<Hypothesis>> {
    let audio = project_audio(model, store, enc)?;
    let mut scorer = ModelScorer::new(model, store, cache, &audio);
    beam_search(&mut scorer, enc.rows(), beam, MAX_SYMBOLS_PER_FRAME)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Fixed per-(frame, prefix length) distributions.
    struct Table {
        n: usize,
        f: fn(usize, usize, usize) -> f64,
    }

    impl Scorer for Table {
        type State = usize;

        fn label_state(&mut self, labels: &[usize]) -> Result<usize> {
            Ok(labels.len())
        }

        fn log_probs(&mut self, t: usize, u: &usize) -> Result<Vec<f64>> {
            let mut v: Vec<f64> = (0..self.n).map(|k| (self.f)(t, *u, k)).collect();
            log_softmax_in_place(&mut v)?;
            Ok(v)
        }
    }

    #[test]
    fn blank_dominant_gives_empty() {
        let mut s = Table {
            n: 4,
            f: |_, _, k| if k == 0 { 5.0 } else { 0.0 },
        };
        let h = greedy_search(&mut s, 6, MAX_SYMBOLS_PER_FRAME).unwrap();
        assert!(h.labels.is_empty());
    }

    #[test]
    fn forced_label_at_frame_one() {
        let mut s = Table {
            n: 4,
            f: |t, u, k| match (t, u, k) {
                (1, 0, 1) => 9.0,
                (_, _, 0) => 5.0,
                _ => 0.0,
            },
        };
        let h = greedy_search(&mut s, 4, MAX_SYMBOLS_PER_FRAME).unwrap();
        assert_eq!((h.labels, h.times), (vec![1], vec![1]));
    }

    #[test]
    fn symbol_cap_bounds_emissions() {
        let mut s = Table {
            n: 3,
            f: |_, _, k| if k == 2 { 5.0 } else { 0.0 },
        };
        let h = greedy_search(&mut s, 3, MAX_SYMBOLS_PER_FRAME).unwrap();
        assert_eq!(h.labels.len(), 3 * MAX_SYMBOLS_PER_FRAME);
        for t in 0..3 {
            assert_eq!(h.times.iter().filter(|&&x| x == t).count(), MAX_SYMBOLS_PER_FRAME);
        }
    }

    #[test]
    fn beam_one_matches_greedy() {
        let f: fn(usize, usize, usize) -> f64 = |t, u, k| libm::sin((t * 7 + u * 3 + k * 11) as f64);
        let g = greedy_search(&mut Table { n: 5, f }, 8, 3).unwrap();
        let b = beam_search(&mut Table { n: 5, f }, 8, 1, 3).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0], g);
    }

    #[test]
    fn nbest_is_sorted_and_distinct() {
        let f: fn(usize, usize, usize) -> f64 = |t, u, k| libm::cos((t * 5 + u * 13 + k * 3) as f64);
        let b4 = beam_search(&mut Table { n: 4, f }, 6, 4, 3).unwrap();
        assert!(b4.len() <= 4);
        assert!(b4.windows(2).all(|w| w[0].score >= w[1].score));
        for (i, a) in b4.iter().enumerate() {
            assert!(b4[i + 1..].iter().all(|b| b.labels != a.labels));
        }
    }
}
