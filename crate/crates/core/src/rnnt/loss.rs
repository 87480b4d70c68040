//! Transducer loss by forward–backward over the alignment lattice.
//!
//! Path convention: a path from node (0,0) takes `T` blank steps and `U`
//! label steps, and its last step is the blank out of node (T−1, U).
//! A label step out of (t,u) emits `y[u]` at frame `t` and lands on (t,u+1).

use alloc::vec;
use alloc::vec::Vec;

use super::align::AlignMask;
use super::lattice::Lattice;
use crate::error::{Error, Result};
use crate::nn::ops::log_add;

const NEG_INF: f64 = f64::NEG_INFINITY;

struct Grid {
    u1: usize,
    data: Vec<f64>,
}

impl Grid {
    fn new(t_len: usize, u_len: usize) -> Self {
        Self {
            u1: u_len + 1,
            data: vec![NEG_INF; t_len * (u_len + 1)],
        }
    }

    #[inline]
    fn get(&self, t: usize, u: usize) -> f64 {
        self.data[t * self.u1 + u]
    }

    #[inline]
    fn set(&mut self, t: usize, u: usize, v: f64) {
        self.data[t * self.u1 + u] = v;
    }
}

#[inline]
fn label_allowed(mask: Option<&AlignMask>, t: usize, u: usize) -> bool {
    mask.is_none_or(|m| m.allowed(t, u))
}

fn check(lat: &Lattice, labels: &[usize], mask: Option<&AlignMask>) -> Result<()> {
    lat.check_labels(labels)?;
    if let Some(m) = mask {
        if m.t_len() != lat.t_len() || m.u_len() != lat.u_len() {
            return Err(Error::shape("alignment mask", lat.t_len(), m.t_len()));
        }
    }
    Ok(())
}

fn forward(lat: &Lattice, labels: &[usize], mask: Option<&AlignMask>) -> (Grid, f64) {
    let (t_len, u_len) = (lat.t_len(), lat.u_len());
    let mut alpha = Grid::new(t_len, u_len);
    alpha.set(0, 0, 0.0);
    for t in 0..t_len {
        for u in 0..=u_len {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = NEG_INF;
            if t > 0 {
                a = alpha.get(t - 1, u) + lat.log_prob(t - 1, u, 0);
            }
            if u > 0 && label_allowed(mask, t, u - 1) {
                a = log_add(a, alpha.get(t, u - 1) + lat.log_prob(t, u - 1, labels[u - 1]));
            }
            alpha.set(t, u, a);
        }
    }
    let total = alpha.get(t_len - 1, u_len) + lat.log_prob(t_len - 1, u_len, 0);
    (alpha, total)
}

fn backward(lat: &Lattice, labels: &[usize], mask: Option<&AlignMask>) -> Grid {
    let (t_len, u_len) = (lat.t_len(), lat.u_len());
    let mut beta = Grid::new(t_len, u_len);
    for t in (0..t_len).rev() {
        for u in (0..=u_len).rev() {
            let b = if t == t_len - 1 && u == u_len {
                lat.log_prob(t, u, 0)
            } else {
                let mut b = NEG_INF;
                if t + 1 < t_len {
                    b = lat.log_prob(t, u, 0) + beta.get(t + 1, u);
                }
                if u < u_len && label_allowed(mask, t, u) {
                    b = log_add(b, lat.log_prob(t, u, labels[u]) + beta.get(t, u + 1));
                }
                b
            };
            beta.set(t, u, b);
        }
    }
    beta
}

/// Negative log-likelihood of `labels` summed over all alignments.
pub fn rnnt_loss(lat: &Lattice, labels: &[usize]) -> Result<f64> {
    check(lat, labels, None)?;
    let (_, total) = forward(lat, labels, None);
    Ok(-total)
}

/// Loss restricted to alignments whose label emissions the mask allows.
pub fn rnnt_loss_constrained(lat: &Lattice, labels: &[usize], mask: &AlignMask) -> Result<f64> {
    check(lat, labels, Some(mask))?;
    let (_, total) = forward(lat, labels, Some(mask));
    if total == NEG_INF {
        return Err(Error::InfeasibleConstraint);
    }
    Ok(-total)
}

/// Gradient of [`rnnt_loss`] with respect to every lattice log-probability.
pub fn rnnt_grad(lat: &Lattice, labels: &[usize]) -> Result<Vec<f64>> {
    Ok(rnnt_loss_and_grad(lat, labels, None)?.1)
}

/// Loss and its gradient in one forward–backward sweep. Entries the loss
/// does not touch (non-target labels, unreachable nodes) get 0.
pub fn rnnt_loss_and_grad(
    lat: &Lattice,
    labels: &[usize],
    mask: Option<&AlignMask>,
) -> Result<(f64, Vec<f64>)> {
    check(lat, labels, mask)?;
    let (t_len, u_len) = (lat.t_len(), lat.u_len());
    let (alpha, total) = forward(lat, labels, mask);
    if total == NEG_INF {
        return Err(Error::InfeasibleConstraint);
    }
    let beta = backward(lat, labels, mask);
    let mut grad = vec![0.0; lat.log_probs().len()];
    for t in 0..t_len {
        for u in 0..=u_len {
            let a = alpha.get(t, u);
            if a == NEG_INF {
                continue;
            }
            let base = lat.node_index(t, u);
            if t == t_len - 1 && u == u_len {
                grad[base] = -libm::exp(a + lat.log_prob(t, u, 0) - total);
                continue;
            }
            if t + 1 < t_len {
                let occ = a + lat.log_prob(t, u, 0) + beta.get(t + 1, u) - total;
                grad[base] = -libm::exp(occ);
            }
            if u < u_len && label_allowed(mask, t, u) {
                let k = labels[u];
                let occ = a + lat.log_prob(t, u, k) + beta.get(t, u + 1) - total;
                grad[base + k] = -libm::exp(occ);
            }
        }
    }
    Ok((-total, grad))
}

/// Best single alignment under the same path convention.
///
/// Ties go to the blank predecessor, so among equally likely paths each
/// label is emitted as early as possible.
pub(crate) fn viterbi(
    lat: &Lattice,
    labels: &[usize],
    mask: Option<&AlignMask>,
) -> Result<(Vec<usize>, f64)> {
    check(lat, labels, mask)?;
    let (t_len, u_len) = (lat.t_len(), lat.u_len());
    let mut delta = Grid::new(t_len, u_len);
    // true = arrived by a label step
    let mut from_label = vec![false; t_len * (u_len + 1)];
    delta.set(0, 0, 0.0);
    for t in 0..t_len {
        for u in 0..=u_len {
            if t == 0 && u == 0 {
                continue;
            }
            let blank = if t > 0 {
                delta.get(t - 1, u) + lat.log_prob(t - 1, u, 0)
            } else {
                NEG_INF
            };
            let label = if u > 0 && label_allowed(mask, t, u - 1) {
                delta.get(t, u - 1) + lat.log_prob(t, u - 1, labels[u - 1])
            } else {
                NEG_INF
            };
            if label > blank {
                delta.set(t, u, label);
                from_label[t * (u_len + 1) + u] = true;
            } else {
                delta.set(t, u, blank);
            }
        }
    }
    let score = delta.get(t_len - 1, u_len) + lat.log_prob(t_len - 1, u_len, 0);
    if score == NEG_INF {
        return Err(Error::InfeasibleConstraint);
    }
    let mut emissions = vec![0; u_len];
    let (mut t, mut u) = (t_len - 1, u_len);
    while t > 0 || u > 0 {
        if from_label[t * (u_len + 1) + u] {
            emissions[u - 1] = t;
            u -= 1;
        } else {
            t -= 1;
        }
    }
    Ok((emissions, score))
}
