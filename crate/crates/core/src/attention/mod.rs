//! Transformer layers with context-limited self-attention.

mod config;
mod layer;
mod mask;
mod mhsa;
mod stack;

pub use config::{ContextConfig, FULL_CONTEXT, STREAMING_LEFT};
pub use layer::{LayerCache, TransformerLayer};
pub use mask::{build_context_mask, context_window, AttentionMask};
pub use mhsa::{relpos_bias, Mhsa, MhsaCache, RelPos};
pub use stack::{stack_frames, unstack_frames};
