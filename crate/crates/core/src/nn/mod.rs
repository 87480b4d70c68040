//! Dense numerics: matrices, primitive kernels with hand-written backward
//! passes, the parameter store and the finite-difference checker.

mod gradcheck;
pub mod ops;
mod params;
mod tensor;

pub use gradcheck::grad_check;
pub use ops::{layer_norm, linear, log_softmax, softmax};
pub use params::{Adam, Grads, LinearIds, NormIds, ParamId, ParamStore};
pub use tensor::{dot, Tensor2};

/// Layer-norm epsilon used throughout the model.
pub const NORM_EPS: f64 = 1e-6;
