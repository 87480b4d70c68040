//! Label encoders: a limited-context transformer and a bigram lookup table.

use alloc::vec::Vec;

use rand::Rng;

use super::config::{LabelMode, ModelConfig};
use super::vocab::BLANK;
use crate::attention::{build_context_mask, LayerCache, RelPos, TransformerLayer};
use crate::error::{Error, Result};
use crate::nn::ops::{layer_norm_backward, layer_norm_cached, LayerNormCache};
use crate::nn::{Grads, NormIds, ParamId, ParamStore, Tensor2, NORM_EPS};

/// Token window a label encoder actually sees for `prefix`.
///
/// The last `context` labels; an empty prefix is the single
/// start-of-sequence token (blank id).
pub fn label_window(prefix: &[usize], context: usize) -> Vec<usize> {
    if prefix.is_empty() {
        return alloc::vec![BLANK];
    }
    prefix[prefix.len().saturating_sub(context)..].to_vec()
}

/// `(prev2, prev1)` bigram context with start-of-sequence mapped to blank.
pub fn bigram_context(prefix: &[usize]) -> (usize, usize) {
    let n = prefix.len();
    let prev1 = if n >= 1 { prefix[n - 1] } else { BLANK };
    let prev2 = if n >= 2 { prefix[n - 2] } else { BLANK };
    (prev2, prev1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLabelEncoder {
    pub embed: ParamId,
    pub layers: Vec<TransformerLayer>,
    pub norm: NormIds,
    pub context: usize,
}

/// `N²×d` table; row `prev2·N + prev1` embeds a bigram context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BigramTable {
    pub table: ParamId,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelEncoder {
    Transformer(TransformerLabelEncoder),
    Bigram(BigramTable),
}

#[derive(Debug, Clone)]
pub enum LabelTrace {
    Transformer {
        window: Vec<usize>,
        layers: Vec<LayerCache>,
        norm: LayerNormCache,
    },
    Bigram {
        row: usize,
    },
}

impl BigramTable {
    pub fn lookup(&self, store: &ParamStore, prev2: usize, prev1: usize) -> Result<Vec<f64>> {
        for id in [prev2, prev1] {
            if id >= self.vocab_size {
                return Err(Error::LabelOutOfRange {
                    id,
                    size: self.vocab_size,
                });
            }
        }
        Ok(store
            .get(self.table)
            .row(prev2 * self.vocab_size + prev1)
            .to_vec())
    }

    pub fn num_params(&self, store: &ParamStore) -> usize {
        store.get(self.table).data().len()
    }
}

impl LabelEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let n = cfg.vocab.len();
        let d = cfg.d_model;
        Ok(match cfg.label_mode {
            LabelMode::Bigram => LabelEncoder::Bigram(BigramTable {
                table: store.add_normal("label.bigram", n * n, d, 0.02, rng),
                vocab_size: n,
            }),
            LabelMode::Transformer { context } => {
                let embed = store.add_normal("label.embed", n, d, 0.02, rng);
                let rp = RelPos {
                    clip_left: context,
                    clip_right: 0,
                };
                let layers = (0..cfg.label_layers)
                    .map(|i| {
                        TransformerLayer::new(
                            store,
                            &alloc::format!("label.layer{i}"),
                            d,
                            cfg.heads,
                            cfg.ffn_dim,
                            rp,
                            rng,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let norm = store.add_norm("label.norm", d);
                LabelEncoder::Transformer(TransformerLabelEncoder {
                    embed,
                    layers,
                    norm,
                    context,
                })
            }
        })
    }

    /// Labels of `prefix` that determine the encoding; used as cache key.
    pub fn key(&self, prefix: &[usize]) -> Vec<usize> {
        match self {
            LabelEncoder::Transformer(t) => label_window(prefix, t.context),
            LabelEncoder::Bigram(_) => {
                let (a, b) = bigram_context(prefix);
                alloc::vec![a, b]
            }
        }
    }

    /// Encoding of a label history.
    pub fn encode(&self, store: &ParamStore, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(self.forward(store, prefix)?.0)
    }

    pub fn forward(&self, store: &ParamStore, prefix: &[usize]) -> Result<(Vec<f64>, LabelTrace)> {
        match self {
            LabelEncoder::Bigram(b) => {
                let (p2, p1) = bigram_context(prefix);
                let v = b.lookup(store, p2, p1)?;
                Ok((
                    v,
                    LabelTrace::Bigram {
                        row: p2 * b.vocab_size + p1,
                    },
                ))
            }
            LabelEncoder::Transformer(t) => {
                let window = label_window(prefix, t.context);
                let embed = store.get(t.embed);
                let mut h = Tensor2::empty(embed.cols());
                for &id in &window {
                    if id >= embed.rows() {
                        return Err(Error::LabelOutOfRange {
                            id,
                            size: embed.rows(),
                        });
                    }
                    h.push_row(embed.row(id))?;
                }
                let mask = build_context_mask(window.len(), Some(t.context - 1), 0);
                let mut caches = Vec::with_capacity(t.layers.len());
                for layer in &t.layers {
                    let (y, c) = layer.forward(store, &h, &mask)?;
                    caches.push(c);
                    h = y;
                }
                let last = h.slice_rows(h.rows() - 1, h.rows());
                let (y, norm) =
                    layer_norm_cached(&last, store.vec(t.norm.gain), store.vec(t.norm.bias), NORM_EPS)?;
                Ok((
                    y.into_vec(),
                    LabelTrace::Transformer {
                        window,
                        layers: caches,
                        norm,
                    },
                ))
            }
        }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &LabelTrace,
        dout: &[f64],
    ) -> Result<()> {
        match (self, cache) {
            (LabelEncoder::Bigram(b), LabelTrace::Bigram { row }) => {
                let g = grads.get_mut(b.table).row_mut(*row);
                for (a, x) in g.iter_mut().zip(dout) {
                    *a += x;
                }
                Ok(())
            }
            (
                LabelEncoder::Transformer(t),
                LabelTrace::Transformer {
                    window,
                    layers,
                    norm,
                },
            ) => {
                let dy = Tensor2::from_vec(1, dout.len(), dout.to_vec())?;
                let dlast = {
                    let (dg, db) = grads.pair_mut(t.norm.gain, t.norm.bias);
                    layer_norm_backward(norm, store.vec(t.norm.gain), &dy, dg.data_mut(), db.data_mut())
                };
                let mut dh = Tensor2::zeros(window.len(), dout.len());
                dh.row_mut(window.len() - 1).copy_from_slice(dlast.row(0));
                for (layer, c) in t.layers.iter().zip(layers).rev() {
                    dh = layer.backward(store, grads, c, &dh)?;
                }
                let ge = grads.get_mut(t.embed);
                for (r, &id) in window.iter().enumerate() {
                    for (a, x) in ge.row_mut(id).iter_mut().zip(dh.row(r)) {
                        *a += x;
                    }
                }
                Ok(())
            }
            _ => Err(Error::State("label cache does not match encoder kind")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_truncates_to_context() {
        assert_eq!(label_window(&[], 3), alloc::vec![BLANK]);
        assert_eq!(label_window(&[1, 2, 3, 4, 5], 3), alloc::vec![3, 4, 5]);
        assert_eq!(label_window(&[4, 5], 3), alloc::vec![4, 5]);
    }

    #[test]
    fn bigram_context_pads_with_blank() {
        assert_eq!(bigram_context(&[]), (0, 0));
        assert_eq!(bigram_context(&[7]), (0, 7));
        assert_eq!(bigram_context(&[1, 2, 3]), (2, 3));
    }
}
