//! Multi-head self-attention with a learned per-head relative position bias.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::mask::{context_window, AttentionMask};
use crate::error::{Error, Result};
use crate::nn::ops::{linear, linear_backward, softmax_in_place};
use crate::nn::{dot, Grads, LinearIds, ParamId, ParamStore, Tensor2};

/// Clipped offset range of a relative position table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelPos {
    pub clip_left: usize,
    pub clip_right: usize,
}

impl RelPos {
    pub fn width(self) -> usize {
        self.clip_left + self.clip_right + 1
    }

    /// Column of `offset = key − query` after clipping to `[−clip_left, clip_right]`.
    #[inline]
    pub fn index(self, offset: isize) -> usize {
        let o = offset.clamp(-(self.clip_left as isize), self.clip_right as isize);
        (o + self.clip_left as isize) as usize
    }
}

/// Per-head bias for one offset. `table` is `heads × width`.
pub fn relpos_bias(offset: isize, table: &Tensor2, rp: RelPos) -> Vec<f64> {
    let c = rp.index(offset);
    (0..table.rows()).map(|h| table.get(h, c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mhsa {
    pub q: LinearIds,
    /// Keys carry no bias: it would add a per-query constant to every
    /// logit, which softmax cancels.
    pub k: ParamId,
    pub v: LinearIds,
    pub o: LinearIds,
    pub relpos: ParamId,
    pub d: usize,
    pub heads: usize,
    pub rp: RelPos,
}

#[derive(Debug, Clone)]
pub struct MhsaCache {
    xn: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// Attention probabilities, one `T×T` matrix per head.
    probs: Vec<Tensor2>,
    concat: Tensor2,
}

impl Mhsa {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        rp: RelPos,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Invalid(alloc::format!(
                "model dim {d} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            q: store.add_linear(&alloc::format!("{name}.q"), d, d, rng),
            k: store.add_weight(&alloc::format!("{name}.k.w"), d, d, rng),
            v: store.add_linear(&alloc::format!("{name}.v"), d, d, rng),
            o: store.add_linear(&alloc::format!("{name}.o"), d, d, rng),
            relpos: store.add_normal(&alloc::format!("{name}.relpos"), heads, rp.width(), 0.02, rng),
            d,
            heads,
            rp,
        })
    }

    #[inline]
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    fn scale(&self) -> f64 {
        1.0 / libm::sqrt(self.head_dim() as f64)
    }

    pub fn project_qkv(&self, store: &ParamStore, xn: &Tensor2) -> Result<(Tensor2, Tensor2, Tensor2)> {
        Ok((
            linear(xn, store.get(self.q.w), store.vec(self.q.b))?,
            xn.matmul(store.get(self.k))?,
            linear(xn, store.get(self.v.w), store.vec(self.v.b))?,
        ))
    }

    pub fn project_out(&self, store: &ParamStore, concat: &Tensor2) -> Result<Tensor2> {
        linear(concat, store.get(self.o.w), store.vec(self.o.b))
    }

    /// Logits of query `qt` (head `h`'s slice, absolute position `t`)
    /// against keys `[lo, hi)`, read from the transposed keys `kt`
    /// (`d × n`, column `s − k_start`). The key dimension is accumulated in
    /// order, vectorized across keys.
    #[allow(clippy::too_many_arguments)]
    fn score_row(
        &self,
        table: &Tensor2,
        h: usize,
        qt: &[f64],
        t: usize,
        kt: &Tensor2,
        k_start: usize,
        lo: usize,
        hi: usize,
        out: &mut [f64],
    ) {
        let dh = self.head_dim();
        let scale = self.scale();
        out.fill(0.0);
        for (c, &qc) in qt.iter().enumerate() {
            let krow = &kt.row(h * dh + c)[lo - k_start..hi - k_start];
            for (o, kv) in out.iter_mut().zip(krow) {
                *o += qc * kv;
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            let bias = table.get(h, self.rp.index((lo + j) as isize - t as isize));
            *o = *o * scale + bias;
        }
    }

    /// Masked attention probabilities of head `h` for every query/key pair,
    /// written into the `T×T` buffer `p`.
    fn head_probs(
        &self,
        table: &Tensor2,
        h: usize,
        q: &Tensor2,
        kt: &Tensor2,
        mask: &AttentionMask,
        p: &mut Tensor2,
    ) -> Result<()> {
        let dh = self.head_dim();
        let cols = h * dh..(h + 1) * dh;
        let t_len = q.rows();
        for t in 0..t_len {
            self.score_row(table, h, &q.row(t)[cols.clone()], t, kt, 0, 0, t_len, p.row_mut(t));
        }
        mask.apply(p);
        for t in 0..t_len {
            softmax_in_place(p.row_mut(t))?;
        }
        Ok(())
    }

    /// Adds `p · v` for head `h` into its columns of `concat`.
    fn head_mix(&self, h: usize, p: &Tensor2, v: &Tensor2, concat: &mut Tensor2) {
        let dh = self.head_dim();
        let cols = h * dh..(h + 1) * dh;
        for t in 0..p.rows() {
            let out = &mut concat.row_mut(t)[cols.clone()];
            for (s, &w) in p.row(t).iter().enumerate() {
                if w != 0.0 {
                    for (o, x) in out.iter_mut().zip(&v.row(s)[cols.clone()]) {
                        *o += w * x;
                    }
                }
            }
        }
    }

    fn check_mask(&self, t_len: usize, mask: &AttentionMask) -> Result<()> {
        if mask.len() != t_len {
            return Err(Error::shape("mhsa mask", t_len, mask.len()));
        }
        Ok(())
    }

    /// Full-sequence attention: every logit is computed, then masked.
    pub fn forward(
        &self,
        store: &ParamStore,
        xn: &Tensor2,
        mask: &AttentionMask,
    ) -> Result<(Tensor2, MhsaCache)> {
        let t_len = xn.rows();
        self.check_mask(t_len, mask)?;
        let (q, k, v) = self.project_qkv(store, xn)?;
        let table = store.get(self.relpos);
        let kt = k.transpose();
        let mut probs = Vec::with_capacity(self.heads);
        let mut concat = Tensor2::zeros(t_len, self.d);
        for h in 0..self.heads {
            let mut p = Tensor2::zeros(t_len, t_len);
            self.head_probs(table, h, &q, &kt, mask, &mut p)?;
            self.head_mix(h, &p, &v, &mut concat);
            probs.push(p);
        }
        let y = self.project_out(store, &concat)?;
        Ok((
            y,
            MhsaCache {
                xn: xn.clone(),
                q,
                k,
                v,
                probs,
                concat,
            },
        ))
    }

    /// [`Mhsa::forward`] without the backward cache: one `T×T` buffer is
    /// reused across heads. Returns the per-head concatenation before the
    /// output projection.
    pub fn attend_full(
        &self,
        store: &ParamStore,
        q: &Tensor2,
        k: &Tensor2,
        v: &Tensor2,
        mask: &AttentionMask,
    ) -> Result<Tensor2> {
        let t_len = q.rows();
        self.check_mask(t_len, mask)?;
        let table = store.get(self.relpos);
        let kt = k.transpose();
        let mut concat = Tensor2::zeros(t_len, self.d);
        let mut p = Tensor2::zeros(t_len, t_len);
        for h in 0..self.heads {
            self.head_probs(table, h, q, &kt, mask, &mut p)?;
            self.head_mix(h, &p, v, &mut concat);
        }
        Ok(concat)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &MhsaCache,
        dy: &Tensor2,
    ) -> Result<Tensor2> {
        let t_len = dy.rows();
        let dconcat = {
            let (dw, db) = grads.pair_mut(self.o.w, self.o.b);
            linear_backward(&cache.concat, store.get(self.o.w), dy, dw, db.data_mut())?
        };
        let dh = self.head_dim();
        let scale = self.scale();
        let mut dq = Tensor2::zeros(t_len, self.d);
        let mut dk = Tensor2::zeros(t_len, self.d);
        let mut dv = Tensor2::zeros(t_len, self.d);
        let mut dp = vec![0.0; t_len];
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let p = &cache.probs[h];
            for t in 0..t_len {
                let dot_t = &dconcat.row(t)[cols.clone()];
                let prow = p.row(t);
                let mut weighted = 0.0;
                for s in 0..t_len {
                    if prow[s] == 0.0 {
                        dp[s] = 0.0;
                        continue;
                    }
                    dp[s] = dot(dot_t, &cache.v.row(s)[cols.clone()]);
                    weighted += prow[s] * dp[s];
                    let dvs = &mut dv.row_mut(s)[cols.clone()];
                    for (g, x) in dvs.iter_mut().zip(dot_t) {
                        *g += prow[s] * x;
                    }
                }
                for s in 0..t_len {
                    if prow[s] == 0.0 {
                        continue;
                    }
                    let ds = prow[s] * (dp[s] - weighted);
                    let c = self.rp.index(s as isize - t as isize);
                    let rel = grads.get_mut(self.relpos);
                    let cur = rel.get(h, c);
                    rel.set(h, c, cur + ds);
                    let ks = ds * scale;
                    {
                        let kr = &cache.k.row(s)[cols.clone()];
                        let dqt = &mut dq.row_mut(t)[cols.clone()];
                        for (g, x) in dqt.iter_mut().zip(kr) {
                            *g += ks * x;
                        }
                    }
                    let qr = &cache.q.row(t)[cols.clone()];
                    let dks = &mut dk.row_mut(s)[cols.clone()];
                    for (g, x) in dks.iter_mut().zip(qr) {
                        *g += ks * x;
                    }
                }
            }
        }
        let mut dxn = Tensor2::zeros(t_len, self.d);
        for (ids, dproj) in [(self.q, &dq), (self.v, &dv)] {
            let (dw, db) = grads.pair_mut(ids.w, ids.b);
            let dx = linear_backward(&cache.xn, store.get(ids.w), dproj, dw, db.data_mut())?;
            dxn.add_assign(&dx)?;
        }
        grads.get_mut(self.k).add_assign(&cache.xn.t_matmul(&dk)?)?;
        dxn.add_assign(&dk.matmul_t(store.get(self.k))?)?;
        Ok(dxn)
    }

    /// Attention for query rows `q` (absolute positions starting at
    /// `q_start`) against cached keys/values whose first row sits at
    /// absolute position `k_start`. `seq_len` bounds the visible keys.
    ///
    /// Returns the per-head concatenation (before the output projection)
    /// and the number of logits computed.
    #[allow(clippy::too_many_arguments)]
    pub fn attend_window(
        &self,
        store: &ParamStore,
        q: &Tensor2,
        q_start: usize,
        k: &Tensor2,
        v: &Tensor2,
        k_start: usize,
        seq_len: usize,
        left: Option<usize>,
        right: usize,
    ) -> Result<(Tensor2, usize)> {
        let dh = self.head_dim();
        let scale = self.scale();
        let table = store.get(self.relpos);
        let mut concat = Tensor2::zeros(q.rows(), self.d);
        let mut entries = 0;
        let mut logits = Vec::new();
        for i in 0..q.rows() {
            let t = q_start + i;
            let (lo, hi) = context_window(t, seq_len, left, right);
            if lo < k_start || hi > k_start + k.rows() {
                return Err(Error::State("attention window outside cached keys"));
            }
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let qt = &q.row(i)[cols.clone()];
                logits.clear();
                for s in lo..hi {
                    let bias = table.get(h, self.rp.index(s as isize - t as isize));
                    logits.push(dot_in_order(qt, &k.row(s - k_start)[cols.clone()]) * scale + bias);
                }
                entries += logits.len();
                softmax_in_place(&mut logits)?;
                let out = &mut concat.row_mut(i)[cols.clone()];
                for (j, s) in (lo..hi).enumerate() {
                    let w = logits[j];
                    for (o, x) in out.iter_mut().zip(&v.row(s - k_start)[cols.clone()]) {
                        *o += w * x;
                    }
                }
            }
        }
        Ok((concat, entries))
    }

    /// Query-slicing attention for the block of queries `[start, end)` of
    /// a sequence whose full `q`/`v` and transposed keys `kt` (`d × T`) are
    /// given. Only the key span the block can see is scored, as one dense
    /// `block × span` matrix per head.
    ///
    /// Returns the per-head concatenation for the block and the size of
    /// that logits matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn attend_block(
        &self,
        store: &ParamStore,
        q: &Tensor2,
        kt: &Tensor2,
        v: &Tensor2,
        start: usize,
        end: usize,
        left: Option<usize>,
        right: usize,
    ) -> Result<(Tensor2, usize)> {
        let t_len = kt.cols();
        if start >= end || end > q.rows() || q.rows() != t_len || v.rows() != t_len || kt.rows() != self.d {
            return Err(Error::shape("attend_block", t_len, q.rows()));
        }
        let dh = self.head_dim();
        let table = store.get(self.relpos);
        let lo = context_window(start, t_len, left, right).0;
        let hi = context_window(end - 1, t_len, left, right).1;
        let span = hi - lo;
        let mut concat = Tensor2::zeros(end - start, self.d);
        let mut p = Tensor2::zeros(end - start, span);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            for t in start..end {
                let (wlo, whi) = context_window(t, t_len, left, right);
                let row = p.row_mut(t - start);
                self.score_row(table, h, &q.row(t)[cols.clone()], t, kt, 0, lo, hi, row);
                for (j, x) in row.iter_mut().enumerate() {
                    let s = lo + j;
                    if s < wlo || s >= whi {
                        *x = f64::NEG_INFINITY;
                    }
                }
                softmax_in_place(row)?;
                let out = &mut concat.row_mut(t - start)[cols.clone()];
                for (j, s) in (lo..hi).enumerate() {
                    let w = p.get(t - start, j);
                    if w != 0.0 {
                        for (o, x) in out.iter_mut().zip(&v.row(s)[cols.clone()]) {
                            *o += w * x;
                        }
                    }
                }
            }
        }
        Ok((concat, (end - start) * span))
    }
}

/// Dot product accumulated strictly left to right, matching the
/// arithmetic of [`Mhsa::score_row`] entry for entry.
#[inline]
fn dot_in_order(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::mask::build_context_mask;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rp() -> RelPos {
        RelPos {
            clip_left: 3,
            clip_right: 2,
        }
    }

    #[test]
    fn clipping_uses_edge_entries() {
        let table = Tensor2::from_vec(1, 6, vec![10.0, 11.0, 12.0, 13.0, 14.0, 15.0]).unwrap();
        assert_eq!(relpos_bias(0, &table, rp()), vec![13.0]);
        assert_eq!(relpos_bias(-3, &table, rp()), vec![10.0]);
        assert_eq!(relpos_bias(-40, &table, rp()), vec![10.0]);
        assert_eq!(relpos_bias(2, &table, rp()), vec![15.0]);
        assert_eq!(relpos_bias(9, &table, rp()), vec![15.0]);
    }

    #[test]
    fn uniform_single_head_averages_values() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mhsa::new(&mut store, "a", 2, 1, rp(), &mut rng).unwrap();
        // zero Q/K → uniform logits; identity V and O projections
        store.get_mut(m.q.w).fill(0.0);
        store.get_mut(m.k).fill(0.0);
        store.get_mut(m.relpos).fill(0.0);
        *store.get_mut(m.v.w) = Tensor2::identity(2);
        *store.get_mut(m.o.w) = Tensor2::identity(2);
        let x = Tensor2::from_vec(2, 2, vec![1.0, 2.0, 5.0, -4.0]).unwrap();
        let (y, _) = m.forward(&store, &x, &build_context_mask(2, None, 1)).unwrap();
        for t in 0..2 {
            assert!((y.get(t, 0) - 3.0).abs() < 1e-12);
            assert!((y.get(t, 1) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn window_attention_matches_masked_full() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mhsa::new(&mut store, "a", 8, 2, rp(), &mut rng).unwrap();
        let x = Tensor2::from_vec(7, 8, (0..56).map(|i| libm::sin(i as f64)).collect()).unwrap();
        let mask = build_context_mask(7, Some(2), 1);
        let (full, _) = m.forward(&store, &x, &mask).unwrap();
        let (q, k, v) = m.project_qkv(&store, &x).unwrap();
        let (concat, entries) = m
            .attend_window(&store, &q, 0, &k, &v, 0, 7, Some(2), 1)
            .unwrap();
        let win = m.project_out(&store, &concat).unwrap();
        assert!(full.max_abs_diff(&win) < 1e-12);
        let expect: usize = (0..7)
            .map(|t| (0..7).filter(|&s| mask.allows(t, s)).count())
            .sum::<usize>()
            * 2;
        assert_eq!(entries, expect);
    }
}
