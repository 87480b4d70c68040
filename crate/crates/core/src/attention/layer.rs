use rand::Rng;

use super::mask::AttentionMask;
use super::mhsa::{Mhsa, MhsaCache, RelPos};
use crate::error::Result;
use crate::nn::ops::{
    layer_norm, layer_norm_backward, layer_norm_cached, linear, linear_backward, swish, swish_grad,
    LayerNormCache,
};
use crate::nn::{Grads, LinearIds, NormIds, ParamStore, Tensor2, NORM_EPS};

/// Pre-norm transformer block:
/// `x′ = x + MHSA(norm(x))`, `y = x′ + FFN(norm(x′))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerLayer {
    pub norm1: NormIds,
    pub attn: Mhsa,
    pub norm2: NormIds,
    pub ff1: LinearIds,
    pub ff2: LinearIds,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    n1: LayerNormCache,
    attn: MhsaCache,
    n2: LayerNormCache,
    n2_out: Tensor2,
    h_pre: Tensor2,
    h: Tensor2,
}

impl TransformerLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        ffn: usize,
        rp: RelPos,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            norm1: store.add_norm(&alloc::format!("{name}.norm1"), d),
            attn: Mhsa::new(store, &alloc::format!("{name}.attn"), d, heads, rp, rng)?,
            norm2: store.add_norm(&alloc::format!("{name}.norm2"), d),
            ff1: store.add_linear(&alloc::format!("{name}.ff1"), d, ffn, rng),
            ff2: store.add_linear(&alloc::format!("{name}.ff2"), ffn, d, rng),
        })
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2,
        mask: &AttentionMask,
    ) -> Result<(Tensor2, LayerCache)> {
        let (xn, n1) = layer_norm_cached(x, store.vec(self.norm1.gain), store.vec(self.norm1.bias), NORM_EPS)?;
        let (a, attn) = self.attn.forward(store, &xn, mask)?;
        let mut mid = x.clone();
        mid.add_assign(&a)?;
        let (n2_out, n2) = layer_norm_cached(&mid, store.vec(self.norm2.gain), store.vec(self.norm2.bias), NORM_EPS)?;
        let h_pre = linear(&n2_out, store.get(self.ff1.w), store.vec(self.ff1.b))?;
        let mut h = h_pre.clone();
        h.data_mut().iter_mut().for_each(|v| *v = swish(*v));
        let f = linear(&h, store.get(self.ff2.w), store.vec(self.ff2.b))?;
        let mut y = mid;
        y.add_assign(&f)?;
        Ok((
            y,
            LayerCache {
                n1,
                attn,
                n2,
                n2_out,
                h_pre,
                h,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &LayerCache,
        dy: &Tensor2,
    ) -> Result<Tensor2> {
        let dh = {
            let (dw, db) = grads.pair_mut(self.ff2.w, self.ff2.b);
            linear_backward(&cache.h, store.get(self.ff2.w), dy, dw, db.data_mut())?
        };
        let mut dh_pre = dh;
        for (g, x) in dh_pre.data_mut().iter_mut().zip(cache.h_pre.data()) {
            *g *= swish_grad(*x);
        }
        let dn2 = {
            let (dw, db) = grads.pair_mut(self.ff1.w, self.ff1.b);
            linear_backward(&cache.n2_out, store.get(self.ff1.w), &dh_pre, dw, db.data_mut())?
        };
        let dmid_norm = {
            let (dg, db) = grads.pair_mut(self.norm2.gain, self.norm2.bias);
            layer_norm_backward(&cache.n2, store.vec(self.norm2.gain), &dn2, dg.data_mut(), db.data_mut())
        };
        let mut dmid = dy.clone();
        dmid.add_assign(&dmid_norm)?;
        let dxn = self.attn.backward(store, grads, &cache.attn, &dmid)?;
        let dx_norm = {
            let (dg, db) = grads.pair_mut(self.norm1.gain, self.norm1.bias);
            layer_norm_backward(&cache.n1, store.vec(self.norm1.gain), &dxn, dg.data_mut(), db.data_mut())
        };
        let mut dx = dmid;
        dx.add_assign(&dx_norm)?;
        Ok(dx)
    }

    /// Inference forward with full masked attention and no backward cache.
    pub fn encode(&self, store: &ParamStore, x: &Tensor2, mask: &AttentionMask) -> Result<Tensor2> {
        let (q, k, v) = self.qkv(store, x)?;
        let concat = self.attn.attend_full(store, &q, &k, &v, mask)?;
        self.finish(store, x, &concat)
    }

    /// Normalized input projected to queries, keys and values (row-wise).
    pub fn qkv(&self, store: &ParamStore, x: &Tensor2) -> Result<(Tensor2, Tensor2, Tensor2)> {
        let xn = layer_norm(x, store.vec(self.norm1.gain), store.vec(self.norm1.bias), NORM_EPS)?;
        self.attn.project_qkv(store, &xn)
    }

    /// Everything after the attention weights: output projection, both
    /// residuals and the feed-forward block (row-wise).
    pub fn finish(&self, store: &ParamStore, x: &Tensor2, concat: &Tensor2) -> Result<Tensor2> {
        let mut mid = x.clone();
        mid.add_assign(&self.attn.project_out(store, concat)?)?;
        let n2 = layer_norm(&mid, store.vec(self.norm2.gain), store.vec(self.norm2.bias), NORM_EPS)?;
        let mut h = linear(&n2, store.get(self.ff1.w), store.vec(self.ff1.b))?;
        h.data_mut().iter_mut().for_each(|v| *v = swish(*v));
        let f = linear(&h, store.get(self.ff2.w), store.vec(self.ff2.b))?;
        mid.add_assign(&f)?;
        Ok(mid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::mask::build_context_mask;
    use crate::nn::ops::softmax;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const RP: RelPos = RelPos {
        clip_left: 4,
        clip_right: 4,
    };

    fn setup(seed: u64) -> (ParamStore, TransformerLayer) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = TransformerLayer::new(&mut store, "l", 8, 2, 16, RP, &mut rng).unwrap();
        // nontrivial norms
        for id in [layer.norm1.gain, layer.norm2.gain, layer.norm1.bias, layer.norm2.bias] {
            for v in store.get_mut(id).data_mut() {
                *v += 0.1 * libm::sin(*v + 1.0);
            }
        }
        (store, layer)
    }

    fn input(rows: usize, cols: usize, seed: f64) -> Tensor2 {
        Tensor2::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|i| libm::sin(seed + 0.7 * i as f64)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_are_identity() {
        let (mut store, layer) = setup(1);
        for id in [layer.attn.o.w, layer.attn.o.b, layer.ff2.w, layer.ff2.b] {
            store.get_mut(id).fill(0.0);
        }
        let x = input(5, 8, 0.3);
        let (y, _) = layer.forward(&store, &x, &build_context_mask(5, None, 2)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn lookahead_bound_per_layer() {
        let (store, layer) = setup(2);
        let x = input(8, 8, 0.1);
        let mask = build_context_mask(8, None, 2);
        let (y, _) = layer.forward(&store, &x, &mask).unwrap();
        let mut x2 = x.clone();
        for s in 6..8 {
            for v in x2.row_mut(s) {
                *v += 3.0;
            }
        }
        let (y2, _) = layer.forward(&store, &x2, &mask).unwrap();
        for t in 0..4 {
            assert_eq!(y.row(t), y2.row(t));
        }
        assert_ne!(y.row(4), y2.row(4));
    }

    /// Straight-line recomputation with scalar loops and no shared kernels.
    fn reference(store: &ParamStore, l: &TransformerLayer, x: &Tensor2, left: Option<usize>, right: usize) -> Tensor2 {
        let d = x.cols();
        let t_len = x.rows();
        let norm = |row: &[f64], g: &[f64], b: &[f64]| -> alloc::vec::Vec<f64> {
            let m = row.iter().sum::<f64>() / d as f64;
            let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / d as f64;
            row.iter()
                .enumerate()
                .map(|(i, a)| g[i] * (a - m) / (v + NORM_EPS).sqrt() + b[i])
                .collect()
        };
        let affine = |v: &[f64], w: &Tensor2, b: &[f64]| -> alloc::vec::Vec<f64> {
            (0..w.cols())
                .map(|j| b[j] + (0..w.rows()).map(|i| v[i] * w.get(i, j)).sum::<f64>())
                .collect()
        };
        let p = |id| store.get(id);
        let xn: alloc::vec::Vec<_> = (0..t_len)
            .map(|t| norm(x.row(t), p(l.norm1.gain).data(), p(l.norm1.bias).data()))
            .collect();
        let q: alloc::vec::Vec<_> = xn.iter().map(|r| affine(r, p(l.attn.q.w), p(l.attn.q.b).data())).collect();
        let k: alloc::vec::Vec<_> = xn.iter().map(|r| affine(r, p(l.attn.k), &alloc::vec![0.0; d])).collect();
        let v: alloc::vec::Vec<_> = xn.iter().map(|r| affine(r, p(l.attn.v.w), p(l.attn.v.b).data())).collect();
        let heads = l.attn.heads;
        let dh = d / heads;
        let mut out = Tensor2::zeros(t_len, d);
        for t in 0..t_len {
            let mut concat = alloc::vec![0.0; d];
            for h in 0..heads {
                let mut logits = alloc::vec::Vec::new();
                for s in 0..t_len {
                    let ok = s <= t + right && left.map_or(true, |lf| s + lf >= t);
                    if !ok {
                        logits.push(f64::NEG_INFINITY);
                        continue;
                    }
                    let mut acc = 0.0;
                    for c in 0..dh {
                        acc += q[t][h * dh + c] * k[s][h * dh + c];
                    }
                    let off = (s as isize - t as isize).clamp(-(RP.clip_left as isize), RP.clip_right as isize);
                    acc = acc / (dh as f64).sqrt() + p(l.attn.relpos).get(h, (off + RP.clip_left as isize) as usize);
                    logits.push(acc);
                }
                let w = softmax(&logits).unwrap();
                for s in 0..t_len {
                    for c in 0..dh {
                        concat[h * dh + c] += w[s] * v[s][h * dh + c];
                    }
                }
            }
            let a = affine(&concat, p(l.attn.o.w), p(l.attn.o.b).data());
            let mid: alloc::vec::Vec<f64> = x.row(t).iter().zip(&a).map(|(x, a)| x + a).collect();
            let n2 = norm(&mid, p(l.norm2.gain).data(), p(l.norm2.bias).data());
            let h: alloc::vec::Vec<f64> = affine(&n2, p(l.ff1.w), p(l.ff1.b).data())
                .into_iter()
                .map(|z| z / (1.0 + (-z).exp()))
                .collect();
            let f = affine(&h, p(l.ff2.w), p(l.ff2.b).data());
            for c in 0..d {
                out.set(t, c, mid[c] + f[c]);
            }
        }
        out
    }

    #[test]
    fn matches_straight_line_reference() {
        let (store, layer) = setup(3);
        let x = input(4, 8, 0.9);
        for (left, right) in [(None, 0), (Some(1), 1), (None, 10)] {
            let (y, _) = layer
                .forward(&store, &x, &build_context_mask(4, left, right))
                .unwrap();
            let r = reference(&store, &layer, &x, left, right);
            assert!(y.max_abs_diff(&r) <= 1e-10, "{left:?} {right}");
        }
    }

    #[test]
    fn row_wise_pieces_compose_to_forward() {
        let (store, layer) = setup(4);
        let x = input(6, 8, 0.2);
        let (y, _) = layer.forward(&store, &x, &build_context_mask(6, Some(2), 1)).unwrap();
        let (q, k, v) = layer.qkv(&store, &x).unwrap();
        let (concat, _) = layer
            .attn
            .attend_window(&store, &q, 0, &k, &v, 0, 6, Some(2), 1)
            .unwrap();
        let y2 = layer.finish(&store, &x, &concat).unwrap();
        assert!(y.max_abs_diff(&y2) < 1e-12);
    }
}
