use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::ops::log_softmax_in_place;

/// Per-node log-distributions over the vocabulary for frames `t ∈ [0,T)`
/// and label positions `u ∈ [0,U]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    t_len: usize,
    u_len: usize,
    vocab: usize,
    log_probs: Vec<f64>,
}

impl Lattice {
    /// Wraps already-normalized log-probabilities laid out as
    /// `[(t·(U+1) + u)·N + k]`.
    pub fn from_log_probs(t_len: usize, u_len: usize, vocab: usize, log_probs: Vec<f64>) -> Result<Self> {
        if log_probs.len() != t_len * (u_len + 1) * vocab {
            return Err(Error::shape(
                "Lattice::from_log_probs",
                t_len * (u_len + 1) * vocab,
                log_probs.len(),
            ));
        }
        Ok(Self {
            t_len,
            u_len,
            vocab,
            log_probs,
        })
    }

    /// Normalizes raw scores node by node.
    pub fn from_logits(t_len: usize, u_len: usize, vocab: usize, mut logits: Vec<f64>) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::Empty("vocabulary"));
        }
        for node in logits.chunks_mut(vocab) {
            log_softmax_in_place(node)?;
        }
        Self::from_log_probs(t_len, u_len, vocab, logits)
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn u_len(&self) -> usize {
        self.u_len
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    #[inline]
    pub fn node_index(&self, t: usize, u: usize) -> usize {
        (t * (self.u_len + 1) + u) * self.vocab
    }

    #[inline]
    pub fn node(&self, t: usize, u: usize) -> &[f64] {
        let i = self.node_index(t, u);
        &self.log_probs[i..i + self.vocab]
    }

    #[inline]
    pub fn log_prob(&self, t: usize, u: usize, k: usize) -> f64 {
        self.log_probs[self.node_index(t, u) + k]
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_probs_mut(&mut self) -> &mut [f64] {
        &mut self.log_probs
    }

    /// Checks that `labels` fits this lattice.
    pub fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if self.t_len == 0 {
            return Err(Error::Empty("lattice has no frames"));
        }
        if labels.len() != self.u_len {
            return Err(Error::LengthMismatch {
                left: self.u_len,
                right: labels.len(),
            });
        }
        if let Some(&id) = labels.iter().find(|&&id| id >= self.vocab || id == 0) {
            return Err(Error::LabelOutOfRange {
                id,
                size: self.vocab,
            });
        }
        Ok(())
    }
}
