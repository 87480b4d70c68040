use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamStore};
use crate::error::{Error, Result};

/// Compares the analytic gradient produced by `loss_fn` against central
/// finite differences and returns the largest relative error
/// `|analytic − fd| / max(|analytic|, |fd|, 1e-8)`.
///
/// `loss_fn` must accumulate its gradient into the `Grads` it is handed.
/// At most `coords_per_param` coordinates of each parameter are probed,
/// chosen with a generator seeded by `seed`. The difference quotient uses
/// the fourth-order central stencil at step `eps`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    eps: f64,
    coords_per_param: usize,
    seed: u64,
    mut loss_fn: F,
) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Grads) -> Result<f64>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Invalid(format!("grad_check eps {eps} outside [1e-6, 1e-3]")));
    }
    let mut analytic = Grads::zeros_like(store);
    let base = loss_fn(store, &mut analytic)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("grad_check loss"));
    }
    let mut scratch = Grads::zeros_like(store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = |store: &ParamStore, scratch: &mut Grads| -> Result<f64> {
        scratch.zero();
        let l = loss_fn(store, scratch)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::NonFinite("grad_check loss"))
        }
    };

    let mut worst = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).data().len();
        let coords: Vec<usize> = if n <= coords_per_param {
            (0..n).collect()
        } else {
            (0..coords_per_param).map(|_| rng.random_range(0..n)).collect()
        };
        for c in coords {
            let orig = store.get(id).data()[c];
            let mut at = |delta: f64, store: &mut ParamStore| -> Result<f64> {
                store.get_mut(id).data_mut()[c] = orig + delta;
                eval(store, &mut scratch)
            };
            let p1 = at(eps, store)?;
            let m1 = at(-eps, store)?;
            let p2 = at(2.0 * eps, store)?;
            let m2 = at(-2.0 * eps, store)?;
            store.get_mut(id).data_mut()[c] = orig;
            let fd = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let a = analytic.get(id).data()[c];
            let denom = libm::fabs(a).max(libm::fabs(fd)).max(1e-8);
            worst = worst.max(libm::fabs(a - fd) / denom);
        }
    }
    Ok(worst)
}
