use alloc::vec;
use alloc::vec::Vec;

use crate::nn::Tensor2;

/// Square boolean attention mask, `true` = attendable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    allowed: Vec<bool>,
}

/// Mask allowing position `t` to attend to `s ∈ [t−left, t+right] ∩ [0, len)`.
/// `left = None` is unbounded.
pub fn build_context_mask(len: usize, left: Option<usize>, right: usize) -> AttentionMask {
    let mut allowed = vec![false; len * len];
    for t in 0..len {
        let (lo, hi) = context_window(t, len, left, right);
        for s in lo..hi {
            allowed[t * len + s] = true;
        }
    }
    AttentionMask { size: len, allowed }
}

/// Half-open key range `[lo, hi)` that query `t` may attend to.
#[inline]
pub fn context_window(t: usize, len: usize, left: Option<usize>, right: usize) -> (usize, usize) {
    let lo = left.map_or(0, |l| t.saturating_sub(l));
    let hi = t.saturating_add(right).saturating_add(1).min(len);
    (lo, hi)
}

impl AttentionMask {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    #[inline]
    pub fn allows(&self, t: usize, s: usize) -> bool {
        self.allowed[t * self.size + s]
    }

    /// Sets every disallowed logit to `-inf`.
    pub fn apply(&self, logits: &mut Tensor2) {
        debug_assert_eq!(logits.shape(), (self.size, self.size));
        for (x, ok) in logits.data_mut().iter_mut().zip(&self.allowed) {
            if !ok {
                *x = f64::NEG_INFINITY;
            }
        }
    }
}
