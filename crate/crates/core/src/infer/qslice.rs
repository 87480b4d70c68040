use alloc::vec::Vec;

use crate::attention::{stack_frames, ContextConfig};
use crate::error::{Error, Result};
use crate::nn::ops::{layer_norm, linear};
use crate::nn::{ParamStore, Tensor2, NORM_EPS};
use crate::transducer::{Model, Stage};

/// Attention working-set measurements from one query-sliced encode.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuerySliceStats {
    /// Largest logits matrix held for one head, per layer.
    pub peak_entries: Vec<usize>,
    /// `block × (left + block + right)` per layer.
    pub bounds: Vec<usize>,
}

impl QuerySliceStats {
    pub fn within_bounds(&self) -> bool {
        self.peak_entries.iter().zip(&self.bounds).all(|(p, b)| p <= b)
    }
}

/// Non-streaming encode that scores attention one query block at a time
/// against only the keys the block's context admits.
pub fn query_slice_encode(
    model: &Model,
    store: &ParamStore,
    x: &Tensor2,
    block: usize,
    cfg: &ContextConfig,
) -> Result<(Tensor2, QuerySliceStats)> {
    cfg.validate(model.depth())?;
    if block == 0 {
        return Err(Error::Invalid("query block must be at least 1".into()));
    }
    if !cfg.has_finite_left() {
        return Err(Error::Unsupported(
            "query slicing needs a finite left context on every layer".into(),
        ));
    }
    if x.cols() != model.config.input_dim {
        return Err(Error::shape("query_slice_encode input", model.config.input_dim, x.cols()));
    }
    let enc = &model.encoder;
    let mut stats = QuerySliceStats::default();
    let mut h = enc.pad_input(x, cfg);
    for stage in enc.stages() {
        h = match stage {
            Stage::InputProj => linear(&h, store.get(enc.input.w), store.vec(enc.input.b))?,
            Stage::Layer(i) => {
                let layer = &enc.layers[i];
                let (left, right) = (cfg.left[i], cfg.right[i]);
                let (q, k, v) = layer.qkv(store, &h)?;
                let kt = k.transpose();
                let mut concat = Tensor2::empty(model.config.d_model);
                let mut peak = 0;
                let mut start = 0;
                while start < h.rows() {
                    let end = (start + block).min(h.rows());
                    let (c, entries) = layer.attn.attend_block(store, &q, &kt, &v, start, end, left, right)?;
                    peak = peak.max(entries);
                    concat.append(&c)?;
                    start = end;
                }
                stats.peak_entries.push(peak);
                let l = left.expect("checked finite");
                stats
                    .bounds
                    .push(block.saturating_mul(l.saturating_add(block).saturating_add(right)));
                if h.rows() == 0 {
                    h
                } else {
                    layer.finish(store, &h, &concat)?
                }
            }
            Stage::Stack => {
                let (_, factor, proj) = enc.stack.ok_or(Error::State("model has no stacking stage"))?;
                linear(&stack_frames(&h, factor)?, store.get(proj.w), store.vec(proj.b))?
            }
            Stage::FinalNorm => layer_norm(
                &h,
                store.vec(enc.final_norm.gain),
                store.vec(enc.final_norm.bias),
                NORM_EPS,
            )?,
        };
    }
    let out = h.slice_rows(cfg.output_delay.min(h.rows()), h.rows());
    Ok((out, stats))
}
