use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Weight and bias of one dense map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearIds {
    pub w: ParamId,
    pub b: ParamId,
}

/// Gain and bias of one layer norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grads {
    tensors: Vec<Tensor2>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            tensors: store
                .values
                .iter()
                .map(|t| Tensor2::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.tensors[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.tensors[id.0]
    }

    /// Mutable access to two distinct buffers at once.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut Tensor2, &mut Tensor2) {
        assert_ne!(a.0, b.0);
        if a.0 < b.0 {
            let (lo, hi) = self.tensors.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.tensors.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn add(&mut self, other: &Grads) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::LengthMismatch {
                left: self.tensors.len(),
                right: other.tensors.len(),
            });
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(s));
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(
            self.tensors
                .iter()
                .flat_map(|t| t.data())
                .map(|x| x * x)
                .sum::<f64>(),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor2> {
        self.tensors.iter()
    }
}

/// Named parameter tensors with gradient accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor2>,
    pub grads: Grads,
    version: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor2) -> ParamId {
        let id = ParamId(self.values.len());
        self.grads
            .tensors
            .push(Tensor2::zeros(value.rows(), value.cols()));
        self.names.push(name.to_string());
        self.values.push(value);
        id
    }

    /// Dense map with uniform ±√(6/(din+dout)) weights and zero bias.
    pub fn add_linear<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut R,
    ) -> LinearIds {
        LinearIds {
            w: self.add_weight(&alloc::format!("{name}.w"), din, dout, rng),
            b: self.insert(&alloc::format!("{name}.b"), Tensor2::zeros(1, dout)),
        }
    }

    /// Bias-free `din × dout` weight with the same uniform init as
    /// [`ParamStore::add_linear`].
    pub fn add_weight<R: Rng + ?Sized>(&mut self, name: &str, din: usize, dout: usize, rng: &mut R) -> ParamId {
        let limit = libm::sqrt(6.0 / (din + dout) as f64);
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bound");
        let w = Tensor2::from_vec(din, dout, (0..din * dout).map(|_| dist.sample(rng)).collect())
            .expect("sized");
        self.insert(name, w)
    }

    pub fn add_norm(&mut self, name: &str, d: usize) -> NormIds {
        let mut gain = Tensor2::zeros(1, d);
        gain.fill(1.0);
        NormIds {
            gain: self.insert(&alloc::format!("{name}.gain"), gain),
            bias: self.insert(&alloc::format!("{name}.bias"), Tensor2::zeros(1, d)),
        }
    }

    /// Tensor drawn from N(0, std²).
    pub fn add_normal<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let dist = Normal::new(0.0, std).expect("std > 0");
        let t = Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
            .expect("sized");
        self.insert(name, t)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.values[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.values[id.0]
    }

    /// Parameter data as a flat vector (biases, gains, tables).
    #[inline]
    pub fn vec(&self, id: ParamId) -> &[f64] {
        self.values[id.0].data()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|t| t.data().len()).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn zero_grads(&mut self) {
        self.grads.zero();
    }

    /// Overwrites all values from another store with identical layout.
    pub fn load_values(&mut self, named: &[(String, Tensor2)]) -> Result<()> {
        if named.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                left: self.values.len(),
                right: named.len(),
            });
        }
        for (i, (name, t)) in named.iter().enumerate() {
            if *name != self.names[i] {
                return Err(Error::Invalid(alloc::format!(
                    "parameter {i} is named {name}, expected {}",
                    self.names[i]
                )));
            }
            if t.shape() != self.values[i].shape() {
                return Err(Error::shape(
                    "load_values",
                    super::tensor::ShapeFmt(self.values[i].shape()),
                    super::tensor::ShapeFmt(t.shape()),
                ));
            }
            self.values[i] = t.clone();
        }
        Ok(())
    }

    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }
}

/// Adam moment estimation.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || -> Vec<Tensor2> {
            store
                .values
                .iter()
                .map(|t| Tensor2::zeros(t.rows(), t.cols()))
                .collect()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies `grads` to `store` and bumps its version by one.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for i in 0..store.values.len() {
            let g = grads.tensors[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = store.values[i].data_mut();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= self.lr * mh / (libm::sqrt(vh) + self.eps);
            }
        }
        store.version += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grads_match_param_shapes_and_version_counts_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let lin = store.add_linear("l", 3, 5, &mut rng);
        let limit = libm::sqrt(6.0 / 8.0);
        assert!(store.get(lin.w).data().iter().all(|x| x.abs() <= limit));
        store.add_norm("n", 5);
        for id in store.ids() {
            assert_eq!(store.get(id).shape(), store.grads.get(id).shape());
        }
        let mut adam = Adam::new(&store, 1e-3);
        let g = Grads::zeros_like(&store);
        assert_eq!(store.version(), 0);
        adam.step(&mut store, &g);
        adam.step(&mut store, &g);
        assert_eq!(store.version(), 2);
    }
}
