//! Transformer-Transducer speech recognition core.
//!
//! `no_std` with `alloc`: tensors and layers with analytic gradients, the
//! transducer model, RNN-T loss with alignment constraints,
//! variable-context training, streaming/query-sliced encoding, transducer
//! search and the dual-latency Y-model session.

#![no_std]

extern crate alloc;

pub mod attention;
pub mod data;
mod error;
pub mod infer;
pub mod metrics;
pub mod nn;
pub mod rnnt;
pub mod train;
pub mod transducer;

pub use error::{Error, Result};
