//! The transducer: audio encoder, label encoders and joint network.

mod config;
mod encoder;
mod joint;
mod label;
mod model;
mod vocab;

pub use config::{LabelMode, ModelConfig, StackSpec};
pub use encoder::{AudioEncoder, EncoderCache, Stage};
pub use joint::Joint;
pub use label::{bigram_context, label_window, BigramTable, LabelEncoder, LabelTrace, TransformerLabelEncoder};
pub use model::{GridTrace, Model};
pub use vocab::{Vocab, BLANK};
