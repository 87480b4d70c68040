use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use super::loss::viterbi;
use crate::error::{Error, Result};

/// Emission frame of every label plus the path's log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub emissions: Vec<usize>,
    pub log_prob: f64,
}

/// Which label steps are permitted: `allowed(t, u)` gates emitting the
/// `u`-th label (0-based) at frame `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignMask {
    t_len: usize,
    u_len: usize,
    allowed: Vec<bool>,
}

impl AlignMask {
    pub fn all(t_len: usize, u_len: usize) -> Self {
        Self {
            t_len,
            u_len,
            allowed: vec![true; t_len * u_len],
        }
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn u_len(&self) -> usize {
        self.u_len
    }

    #[inline]
    pub fn allowed(&self, t: usize, u: usize) -> bool {
        self.allowed[t * self.u_len + u]
    }

    pub fn set(&mut self, t: usize, u: usize, ok: bool) {
        self.allowed[t * self.u_len + u] = ok;
    }

    pub fn is_all(&self) -> bool {
        self.allowed.iter().all(|&a| a)
    }
}

/// Window `[lo − w_left, hi + w_right]` clipped to `[0, T)`. `None` widths
/// are unbounded.
fn window_mask(
    bounds: &[(usize, usize)],
    w_left: Option<usize>,
    w_right: Option<usize>,
    t_len: usize,
) -> AlignMask {
    let u_len = bounds.len();
    let mut m = AlignMask {
        t_len,
        u_len,
        allowed: vec![false; t_len * u_len],
    };
    for (u, &(lo, hi)) in bounds.iter().enumerate() {
        for t in 0..t_len {
            let after_lo = w_left.is_none_or(|w| t + w >= lo);
            let before_hi = w_right.is_none_or(|w| t <= hi + w);
            m.set(t, u, after_lo && before_hi);
        }
    }
    m
}

/// Per-label window around reference emission frames.
pub fn constrained_mask(
    reference: &AlignmentPath,
    w_left: Option<usize>,
    w_right: Option<usize>,
    t_len: usize,
    u_len: usize,
) -> Result<AlignMask> {
    if reference.emissions.len() != u_len {
        return Err(Error::LengthMismatch {
            left: u_len,
            right: reference.emissions.len(),
        });
    }
    let bounds: Vec<_> = reference.emissions.iter().map(|&e| (e, e)).collect();
    Ok(window_mask(&bounds, w_left, w_right, t_len))
}

/// Word-level window: every token of a word may be emitted anywhere from
/// `w_left` before the word's first reference emission to `w_right` after
/// its last. Words are maximal runs of non-`space` tokens; each space is
/// its own group.
pub fn constrained_mask_words(
    reference: &AlignmentPath,
    labels: &[usize],
    space: usize,
    w_left: Option<usize>,
    w_right: Option<usize>,
    t_len: usize,
) -> Result<AlignMask> {
    if reference.emissions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: reference.emissions.len(),
        });
    }
    let e = &reference.emissions;
    let mut bounds = vec![(0, 0); labels.len()];
    let mut start = 0;
    while start < labels.len() {
        let mut end = start + 1;
        if labels[start] != space {
            while end < labels.len() && labels[end] != space {
                end += 1;
            }
        }
        let lo = e[start..end].iter().copied().min().unwrap_or(0);
        let hi = e[start..end].iter().copied().max().unwrap_or(0);
        bounds[start..end].iter_mut().for_each(|b| *b = (lo, hi));
        start = end;
    }
    Ok(window_mask(&bounds, w_left, w_right, t_len))
}

/// Most probable alignment of `labels`.
pub fn viterbi_alignment(lat: &Lattice, labels: &[usize]) -> Result<AlignmentPath> {
    let (emissions, log_prob) = viterbi(lat, labels, None)?;
    Ok(AlignmentPath { emissions, log_prob })
}

/// Most probable alignment among those the mask admits.
pub fn viterbi_alignment_constrained(lat: &Lattice, labels: &[usize], mask: &AlignMask) -> Result<AlignmentPath> {
    let (emissions, log_prob) = viterbi(lat, labels, Some(mask))?;
    Ok(AlignmentPath { emissions, log_prob })
}
