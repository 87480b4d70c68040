use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::encoder::{AudioEncoder, EncoderCache};
use super::joint::{hidden, Joint};
use super::label::{LabelEncoder, LabelTrace};
use crate::attention::ContextConfig;
use crate::error::{Error, Result};
use crate::infer::LabelCache;
use crate::nn::ops::{linear_backward, log_softmax_backward, log_softmax_in_place};
use crate::nn::{Grads, ParamStore, Tensor2};
use crate::rnnt::{rnnt_loss_and_grad, AlignMask, Lattice};

/// Transformer-Transducer architecture. Holds parameter handles only; the
/// weights live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: AudioEncoder,
    pub label: LabelEncoder,
    pub joint: Joint,
}

/// Everything a backward pass over a lattice needs.
#[derive(Debug, Clone)]
pub struct GridTrace {
    enc: EncoderCache,
    enc_out: Tensor2,
    label_traces: Vec<LabelTrace>,
    label_out: Tensor2,
    z: Tensor2,
    lattice: Lattice,
}

impl GridTrace {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
}

impl Model {
    /// Builds the architecture and a freshly initialized store.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = AudioEncoder::new(&mut store, &config, &mut rng)?;
        let label = LabelEncoder::new(&mut store, &config, &mut rng)?;
        let joint = Joint::new(&mut store, config.d_model, config.joint_dim, config.vocab.len(), &mut rng);
        Ok((
            Self {
                config,
                encoder,
                label,
                joint,
            },
            store,
        ))
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab.len()
    }

    pub fn depth(&self) -> usize {
        self.encoder.depth()
    }

    pub fn audio_encode(&self, store: &ParamStore, x: &Tensor2, cfg: &ContextConfig) -> Result<Tensor2> {
        if x.cols() != self.config.input_dim {
            return Err(Error::shape("audio_encode input", self.config.input_dim, x.cols()));
        }
        self.encoder.encode(store, x, cfg)
    }

    /// Log-probability lattice for `labels` given features `x`.
    pub fn logits_grid(
        &self,
        store: &ParamStore,
        x: &Tensor2,
        labels: &[usize],
        cfg: &ContextConfig,
        cache: Option<&mut LabelCache>,
    ) -> Result<Lattice> {
        let enc = self.audio_encode(store, x, cfg)?;
        let mut label_out = Tensor2::empty(self.config.d_model);
        match cache {
            Some(c) => {
                for u in 0..=labels.len() {
                    label_out.push_row(&c.encode(self, store, &labels[..u])?)?;
                }
            }
            None => {
                for u in 0..=labels.len() {
                    label_out.push_row(&self.label.encode(store, &labels[..u])?)?;
                }
            }
        }
        Ok(self.joint_grid(store, &enc, &label_out)?.1)
    }

    fn joint_grid(&self, store: &ParamStore, enc: &Tensor2, label_out: &Tensor2) -> Result<(Tensor2, Lattice)> {
        let pa = self.joint.project_audio(store, enc)?;
        let pl = self.joint.project_labels(store, label_out)?;
        let (t_len, u1) = (pa.rows(), pl.rows());
        let dj = pa.cols();
        let mut z = Tensor2::zeros(t_len * u1, dj);
        for t in 0..t_len {
            for u in 0..u1 {
                hidden(pa.row(t), pl.row(u), z.row_mut(t * u1 + u));
            }
        }
        let mut logits = z.matmul(store.get(self.joint.out.w))?;
        logits.add_row_vector(store.vec(self.joint.out.b))?;
        let n = logits.cols();
        let mut lp = logits.into_vec();
        for node in lp.chunks_mut(n) {
            log_softmax_in_place(node)?;
        }
        let lattice = Lattice::from_log_probs(t_len, u1 - 1, n, lp)?;
        Ok((z, lattice))
    }

    /// Forward pass keeping the intermediate values for [`Model::grid_backward`].
    pub fn grid_forward(
        &self,
        store: &ParamStore,
        x: &Tensor2,
        labels: &[usize],
        cfg: &ContextConfig,
    ) -> Result<GridTrace> {
        if x.cols() != self.config.input_dim {
            return Err(Error::shape("grid_forward input", self.config.input_dim, x.cols()));
        }
        self.config.vocab.check(labels)?;
        let (enc_out, enc) = self.encoder.forward(store, x, cfg)?;
        let mut label_out = Tensor2::empty(self.config.d_model);
        let mut label_traces = Vec::with_capacity(labels.len() + 1);
        for u in 0..=labels.len() {
            let (v, tr) = self.label.forward(store, &labels[..u])?;
            label_out.push_row(&v)?;
            label_traces.push(tr);
        }
        let (z, lattice) = self.joint_grid(store, &enc_out, &label_out)?;
        Ok(GridTrace {
            enc,
            enc_out,
            label_traces,
            label_out,
            z,
            lattice,
        })
    }

    /// Backpropagates `dlogp` (laid out like the lattice) into `grads`.
    pub fn grid_backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        trace: &GridTrace,
        dlogp: &[f64],
    ) -> Result<()> {
        let lat = &trace.lattice;
        let n = lat.vocab();
        let (t_len, u1) = (lat.t_len(), lat.u_len() + 1);
        let mut dlogits = Tensor2::zeros(t_len * u1, n);
        for (i, (lp, g)) in lat.log_probs().chunks(n).zip(dlogp.chunks(n)).enumerate() {
            if g.iter().any(|v| *v != 0.0) {
                dlogits.row_mut(i).copy_from_slice(&log_softmax_backward(lp, g));
            }
        }
        let mut dz = {
            let (dw, db) = grads.pair_mut(self.joint.out.w, self.joint.out.b);
            linear_backward(&trace.z, store.get(self.joint.out.w), &dlogits, dw, db.data_mut())?
        };
        for (g, z) in dz.data_mut().iter_mut().zip(trace.z.data()) {
            *g *= 1.0 - z * z;
        }
        let dj = dz.cols();
        let mut dpa = Tensor2::zeros(t_len, dj);
        let mut dpl = Tensor2::zeros(u1, dj);
        for t in 0..t_len {
            for u in 0..u1 {
                let row = dz.row(t * u1 + u);
                for (a, v) in dpa.row_mut(t).iter_mut().zip(row) {
                    *a += v;
                }
                for (a, v) in dpl.row_mut(u).iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        let denc = {
            let (dw, db) = grads.pair_mut(self.joint.audio.w, self.joint.audio.b);
            linear_backward(&trace.enc_out, store.get(self.joint.audio.w), &dpa, dw, db.data_mut())?
        };
        let dlabel = {
            let (dw, db) = grads.pair_mut(self.joint.label.w, self.joint.label.b);
            linear_backward(&trace.label_out, store.get(self.joint.label.w), &dpl, dw, db.data_mut())?
        };
        for (u, tr) in trace.label_traces.iter().enumerate() {
            self.label.backward(store, grads, tr, dlabel.row(u))?;
        }
        self.encoder.backward(store, grads, &trace.enc, &denc)
    }

    /// RNN-T loss of one utterance; accumulates its gradient into `grads`.
    pub fn loss_and_grad(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: &Tensor2,
        labels: &[usize],
        cfg: &ContextConfig,
        mask: Option<&AlignMask>,
    ) -> Result<f64> {
        let trace = self.grid_forward(store, x, labels, cfg)?;
        let (loss, dlogp) = rnnt_loss_and_grad(&trace.lattice, labels, mask)?;
        self.grid_backward(store, grads, &trace, &dlogp)?;
        Ok(loss)
    }
}

