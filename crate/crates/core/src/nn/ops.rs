//! Primitive forward/backward kernels.
//!
//! Every backward here accumulates (`+=`) into parameter gradients and
//! returns a fresh input gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{ShapeFmt, Tensor2};
use crate::error::{Error, Result};

/// `y = x·W + b`, row-wise.
pub fn linear(x: &Tensor2, w: &Tensor2, b: &[f64]) -> Result<Tensor2> {
    if x.cols() != w.rows() {
        return Err(Error::shape("linear", w.rows(), x.cols()));
    }
    if b.len() != w.cols() {
        return Err(Error::shape("linear bias", w.cols(), b.len()));
    }
    let mut y = x.matmul(w)?;
    y.add_row_vector(b)?;
    Ok(y)
}

/// Backward of [`linear`]; accumulates into `dw`/`db` and returns `dx`.
pub fn linear_backward(
    x: &Tensor2,
    w: &Tensor2,
    dy: &Tensor2,
    dw: &mut Tensor2,
    db: &mut [f64],
) -> Result<Tensor2> {
    dw.add_assign(&x.t_matmul(dy)?)?;
    for (g, s) in db.iter_mut().zip(dy.col_sums()) {
        *g += s;
    }
    dy.matmul_t(w)
}

/// Softmax of a vector. `-inf` entries are masked and come out exactly 0.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

pub fn softmax_in_place(v: &mut [f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax"));
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = if *x == f64::NEG_INFINITY {
            0.0
        } else {
            libm::exp(*x - max)
        };
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    Ok(())
}

/// Numerically stable `log(softmax(v))`.
pub fn log_softmax(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    log_softmax_in_place(&mut out)?;
    Ok(out)
}

pub fn log_softmax_in_place(v: &mut [f64]) -> Result<()> {
    let lse = log_sum_exp(v)?;
    for x in v.iter_mut() {
        *x -= lse;
    }
    Ok(())
}

pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Empty("log_sum_exp input"));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    if !max.is_finite() {
        return Err(Error::NonFinite("log_sum_exp"));
    }
    let s: f64 = v.iter().map(|x| libm::exp(x - max)).sum();
    Ok(max + libm::log(s))
}

/// `log(exp(a) + exp(b))` with `-inf` handling.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// Backward of log-softmax given the forward output `logp`.
pub fn log_softmax_backward(logp: &[f64], dlogp: &[f64]) -> Vec<f64> {
    let s: f64 = dlogp.iter().sum();
    logp.iter()
        .zip(dlogp)
        .map(|(lp, g)| g - libm::exp(*lp) * s)
        .collect()
}

/// Cached statistics of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Tensor2,
    pub inv_std: Vec<f64>,
}

/// Per-row normalization over the feature dimension.
pub fn layer_norm(x: &Tensor2, gain: &[f64], bias: &[f64], eps: f64) -> Result<Tensor2> {
    Ok(layer_norm_cached(x, gain, bias, eps)?.0)
}

pub fn layer_norm_cached(
    x: &Tensor2,
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> Result<(Tensor2, LayerNormCache)> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape(
            "layer_norm",
            d,
            ShapeFmt((gain.len(), bias.len())),
        ));
    }
    let mut y = Tensor2::zeros(x.rows(), d);
    let mut xhat = Tensor2::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let denom = libm::sqrt(var + eps);
        // constant rows with eps = 0 normalize to zero rather than NaN
        let is = if denom > 0.0 { 1.0 / denom } else { 0.0 };
        inv_std.push(is);
        let xh = xhat.row_mut(r);
        for (o, v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
        let yr = y.row_mut(r);
        for c in 0..d {
            yr[c] = gain[c] * xhat.get(r, c) + bias[c];
        }
    }
    Ok((y, LayerNormCache { xhat, inv_std }))
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    dy: &Tensor2,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Tensor2 {
    let d = dy.cols();
    let n = d as f64;
    let mut dx = Tensor2::zeros(dy.rows(), d);
    let mut dxhat = vec![0.0; d];
    for r in 0..dy.rows() {
        let g = dy.row(r);
        let xh = cache.xhat.row(r);
        for c in 0..d {
            dgain[c] += g[c] * xh[c];
            dbias[c] += g[c];
            dxhat[c] = g[c] * gain[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let is = cache.inv_std[r];
        let out = dx.row_mut(r);
        for c in 0..d {
            out[c] = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

/// Smooth gated activation `x·σ(x)`.
#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
