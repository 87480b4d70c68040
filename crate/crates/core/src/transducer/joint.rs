use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::ops::linear;
use crate::nn::{LinearIds, ParamStore, Tensor2};

/// `logits = W_o·tanh(W_a·a + b_a + W_l·l + b_l) + b_o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Joint {
    pub audio: LinearIds,
    pub label: LinearIds,
    pub out: LinearIds,
}

impl Joint {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        d_model: usize,
        joint_dim: usize,
        vocab: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            audio: store.add_linear("joint.audio", d_model, joint_dim, rng),
            label: store.add_linear("joint.label", d_model, joint_dim, rng),
            out: store.add_linear("joint.out", joint_dim, vocab, rng),
        }
    }

    /// Audio half of the joint input for every encoder frame.
    pub fn project_audio(&self, store: &ParamStore, enc: &Tensor2) -> Result<Tensor2> {
        linear(enc, store.get(self.audio.w), store.vec(self.audio.b))
    }

    /// Label half of the joint input, one row per label history.
    pub fn project_labels(&self, store: &ParamStore, label_out: &Tensor2) -> Result<Tensor2> {
        linear(label_out, store.get(self.label.w), store.vec(self.label.b))
    }

    pub fn project_label(&self, store: &ParamStore, l: &[f64]) -> Result<Vec<f64>> {
        let row = Tensor2::from_vec(1, l.len(), l.to_vec())?;
        Ok(linear(&row, store.get(self.label.w), store.vec(self.label.b))?.into_vec())
    }

    /// Logits from already-projected halves.
    pub fn logits_projected(&self, store: &ParamStore, pa: &[f64], pl: &[f64]) -> Result<Vec<f64>> {
        if pa.len() != pl.len() {
            return Err(Error::shape("joint", pa.len(), pl.len()));
        }
        let w = store.get(self.out.w);
        if w.rows() != pa.len() {
            return Err(Error::shape("joint out", w.rows(), pa.len()));
        }
        let mut out = store.vec(self.out.b).to_vec();
        for (j, (a, l)) in pa.iter().zip(pl).enumerate() {
            let z = libm::tanh(a + l);
            if z != 0.0 {
                for (o, wv) in out.iter_mut().zip(w.row(j)) {
                    *o += z * wv;
                }
            }
        }
        Ok(out)
    }

    /// Unnormalized scores for one `(a_t, l_u)` pair.
    pub fn logits(&self, store: &ParamStore, a: &[f64], l: &[f64]) -> Result<Vec<f64>> {
        let arow = Tensor2::from_vec(1, a.len(), a.to_vec())?;
        let pa = linear(&arow, store.get(self.audio.w), store.vec(self.audio.b))?;
        let pl = self.project_label(store, l)?;
        self.logits_projected(store, pa.data(), &pl)
    }

    pub fn vocab(&self, store: &ParamStore) -> usize {
        store.get(self.out.w).cols()
    }

    pub fn dim(&self, store: &ParamStore) -> usize {
        store.get(self.out.w).rows()
    }
}

/// `tanh(a + l)` for one node, exposed for backward passes.
#[inline]
pub(crate) fn hidden(pa: &[f64], pl: &[f64], out: &mut [f64]) {
    for ((o, a), l) in out.iter_mut().zip(pa).zip(pl) {
        *o = libm::tanh(a + l);
    }
}

