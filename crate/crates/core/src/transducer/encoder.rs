//! Audio encoder: input projection, transformer stack with optional frame
//! stacking, final normalization.

use alloc::vec::Vec;

use rand::Rng;

use super::config::ModelConfig;
use crate::attention::{build_context_mask, stack_frames, ContextConfig, LayerCache, RelPos, TransformerLayer};
use crate::error::Result;
use crate::nn::ops::{layer_norm, layer_norm_backward, layer_norm_cached, linear, linear_backward, LayerNormCache};
use crate::nn::{Grads, LinearIds, NormIds, ParamStore, Tensor2, NORM_EPS};

/// One step of the encoder pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    InputProj,
    Layer(usize),
    Stack,
    FinalNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioEncoder {
    pub input: LinearIds,
    pub layers: Vec<TransformerLayer>,
    pub stack: Option<(usize, usize, LinearIds)>,
    pub final_norm: NormIds,
}

#[derive(Debug, Clone)]
enum StageCache {
    Input(Tensor2),
    Layer(LayerCache),
    Stack { rows: usize, stacked: Tensor2 },
    Norm(LayerNormCache),
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    stages: Vec<StageCache>,
    delay: usize,
}

impl AudioEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let d = cfg.d_model;
        let rp = RelPos {
            clip_left: cfg.relpos_clip,
            clip_right: cfg.relpos_clip,
        };
        let input = store.add_linear("enc.input", cfg.input_dim, d, rng);
        let mut layers = Vec::with_capacity(cfg.layers);
        let mut stack = None;
        for i in 0..cfg.layers {
            if let Some(s) = cfg.stack {
                if s.after_layers == i {
                    stack = Some((i, s.factor, store.add_linear("enc.stack", d * s.factor, d, rng)));
                }
            }
            layers.push(TransformerLayer::new(
                store,
                &alloc::format!("enc.layer{i}"),
                d,
                cfg.heads,
                cfg.ffn_dim,
                rp,
                rng,
            )?);
        }
        if let Some(s) = cfg.stack {
            if s.after_layers == cfg.layers {
                stack = Some((cfg.layers, s.factor, store.add_linear("enc.stack", d * s.factor, d, rng)));
            }
        }
        let final_norm = store.add_norm("enc.norm", d);
        Ok(Self {
            input,
            layers,
            stack,
            final_norm,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Input frames folded into one output frame.
    pub fn output_rate(&self) -> usize {
        self.stack.map_or(1, |(_, f, _)| f)
    }

    pub fn stages(&self) -> Vec<Stage> {
        let mut out = alloc::vec![Stage::InputProj];
        for i in 0..self.layers.len() {
            if matches!(self.stack, Some((at, _, _)) if at == i) {
                out.push(Stage::Stack);
            }
            out.push(Stage::Layer(i));
        }
        if matches!(self.stack, Some((at, _, _)) if at == self.layers.len()) {
            out.push(Stage::Stack);
        }
        out.push(Stage::FinalNorm);
        out
    }

    /// Input with `output_delay` frames of zero padding appended.
    pub(crate) fn pad_input(&self, x: &Tensor2, cfg: &ContextConfig) -> Tensor2 {
        let pad = cfg.output_delay * self.output_rate();
        let mut padded = x.clone();
        for _ in 0..pad {
            padded.push_row(&alloc::vec![0.0; x.cols()]).expect("same width");
        }
        padded
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2,
        cfg: &ContextConfig,
    ) -> Result<(Tensor2, EncoderCache)> {
        cfg.validate(self.depth())?;
        let mut h = self.pad_input(x, cfg);
        let mut stages = Vec::new();
        for stage in self.stages() {
            h = match stage {
                Stage::InputProj => {
                    let y = linear(&h, store.get(self.input.w), store.vec(self.input.b))?;
                    stages.push(StageCache::Input(h));
                    y
                }
                Stage::Layer(i) => {
                    let mask = build_context_mask(h.rows(), cfg.left[i], cfg.right[i]);
                    let (y, c) = self.layers[i].forward(store, &h, &mask)?;
                    stages.push(StageCache::Layer(c));
                    y
                }
                Stage::Stack => {
                    let (_, factor, proj) = self.stack.expect("stack stage");
                    let stacked = stack_frames(&h, factor)?;
                    let y = linear(&stacked, store.get(proj.w), store.vec(proj.b))?;
                    stages.push(StageCache::Stack {
                        rows: h.rows(),
                        stacked,
                    });
                    y
                }
                Stage::FinalNorm => {
                    let (y, c) = layer_norm_cached(
                        &h,
                        store.vec(self.final_norm.gain),
                        store.vec(self.final_norm.bias),
                        NORM_EPS,
                    )?;
                    stages.push(StageCache::Norm(c));
                    y
                }
            };
        }
        let out = h.slice_rows(cfg.output_delay.min(h.rows()), h.rows());
        Ok((
            out,
            EncoderCache {
                stages,
                delay: cfg.output_delay,
            },
        ))
    }

    /// Offline encode with full masked attention per layer; keeps nothing
    /// for a backward pass.
    pub fn encode(&self, store: &ParamStore, x: &Tensor2, cfg: &ContextConfig) -> Result<Tensor2> {
        cfg.validate(self.depth())?;
        let mut h = self.pad_input(x, cfg);
        for stage in self.stages() {
            h = match stage {
                Stage::InputProj => linear(&h, store.get(self.input.w), store.vec(self.input.b))?,
                Stage::Layer(i) => {
                    let mask = build_context_mask(h.rows(), cfg.left[i], cfg.right[i]);
                    self.layers[i].encode(store, &h, &mask)?
                }
                Stage::Stack => {
                    let (_, factor, proj) = self.stack.expect("stack stage");
                    linear(&stack_frames(&h, factor)?, store.get(proj.w), store.vec(proj.b))?
                }
                Stage::FinalNorm => layer_norm(
                    &h,
                    store.vec(self.final_norm.gain),
                    store.vec(self.final_norm.bias),
                    NORM_EPS,
                )?,
            };
        }
        Ok(h.slice_rows(cfg.output_delay.min(h.rows()), h.rows()))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &EncoderCache,
        dout: &Tensor2,
    ) -> Result<()> {
        let mut dh = Tensor2::zeros(cache.delay + dout.rows(), dout.cols());
        for r in 0..dout.rows() {
            dh.row_mut(cache.delay + r).copy_from_slice(dout.row(r));
        }
        let stages = self.stages();
        for (stage, c) in stages.iter().zip(&cache.stages).rev() {
            dh = match (stage, c) {
                (Stage::FinalNorm, StageCache::Norm(c)) => {
                    let (dg, db) = grads.pair_mut(self.final_norm.gain, self.final_norm.bias);
                    layer_norm_backward(c, store.vec(self.final_norm.gain), &dh, dg.data_mut(), db.data_mut())
                }
                (Stage::Layer(i), StageCache::Layer(c)) => self.layers[*i].backward(store, grads, c, &dh)?,
                (Stage::Stack, StageCache::Stack { rows, stacked }) => {
                    let (_, factor, proj) = self.stack.expect("stack stage");
                    let dstacked = {
                        let (dw, db) = grads.pair_mut(proj.w, proj.b);
                        linear_backward(stacked, store.get(proj.w), &dh, dw, db.data_mut())?
                    };
                    let d = dstacked.cols() / factor;
                    Tensor2::from_vec(dstacked.rows() * factor, d, dstacked.into_vec())?.slice_rows(0, *rows)
                }
                (Stage::InputProj, StageCache::Input(x)) => {
                    let (dw, db) = grads.pair_mut(self.input.w, self.input.b);
                    linear_backward(x, store.get(self.input.w), &dh, dw, db.data_mut())?
                }
                _ => unreachable!("stage/cache order"),
            };
        }
        Ok(())
    }
}
