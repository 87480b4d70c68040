use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LabelMode {
    /// Transformer over the last `context` labels.
    Transformer { context: usize },
    /// `N²·d` embedding table indexed by the previous two labels.
    Bigram,
}

impl core::fmt::Display for LabelMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LabelMode::Transformer { context } => write!(f, "transformer-{context}"),
            LabelMode::Bigram => f.write_str("bigram"),
        }
    }
}

impl core::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bigram" {
            return Ok(LabelMode::Bigram);
        }
        s.strip_prefix("transformer-")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .map(|context| LabelMode::Transformer { context })
            .ok_or_else(|| Error::Invalid(alloc::format!("unknown label mode {s:?}")))
    }
}

/// Frame-rate change inside the audio encoder: after `after_layers`
/// transformer layers, `factor` frames are stacked and projected back to
/// the model width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackSpec {
    pub after_layers: usize,
    pub factor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub stack: Option<StackSpec>,
    pub relpos_clip: usize,
    pub label_mode: LabelMode,
    pub label_layers: usize,
    pub joint_dim: usize,
    pub vocab: Vocab,
    /// Right-context configurations the model is meant to run with, in
    /// `[k] x m + ...` notation.
    pub menu: Vec<String>,
    pub frame_ms: f64,
}

impl Default for ModelConfig {
    /// 6 layers, d = 64, 4 heads, FFN 128, 3-label transformer label encoder.
    fn default() -> Self {
        Self {
            input_dim: 16,
            d_model: 64,
            heads: 4,
            ffn_dim: 128,
            layers: 6,
            stack: None,
            relpos_clip: 16,
            label_mode: LabelMode::Transformer { context: 3 },
            label_layers: 1,
            joint_dim: 64,
            vocab: Vocab::graphemes(),
            menu: vec![String::from("[0] x 6")],
            frame_ms: 30.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Invalid(alloc::format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model,
                self.heads
            )));
        }
        if self.layers == 0 || self.input_dim == 0 || self.ffn_dim == 0 || self.joint_dim == 0 {
            return Err(Error::Invalid("layer sizes must be positive".into()));
        }
        if let Some(s) = self.stack {
            if s.factor == 0 || s.after_layers > self.layers {
                return Err(Error::Invalid(alloc::format!("bad stacking spec {s:?}")));
            }
        }
        if let LabelMode::Transformer { context: 0 } = self.label_mode {
            return Err(Error::Invalid("label context must be at least 1".into()));
        }
        if !(self.frame_ms > 0.0) {
            return Err(Error::Invalid("frame_ms must be positive".into()));
        }
        Ok(())
    }

    /// Input frames per encoder frame at transformer layer `layer`.
    pub fn layer_rate(&self, layer: usize) -> usize {
        match self.stack {
            Some(s) if layer >= s.after_layers => s.factor,
            _ => 1,
        }
    }

    /// Input frames per encoder output frame.
    pub fn output_rate(&self) -> usize {
        self.stack.map_or(1, |s| s.factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn label_mode_text() {
        for m in [LabelMode::Bigram, LabelMode::Transformer { context: 3 }] {
            assert_eq!(m.to_string().parse::<LabelMode>().unwrap(), m);
        }
        assert!("transformer-0".parse::<LabelMode>().is_err());
        assert!("lstm".parse::<LabelMode>().is_err());
    }

    #[test]
    fn default_is_valid() {
        ModelConfig::default().validate().unwrap();
        let mut c = ModelConfig::default();
        c.heads = 5;
        assert!(c.validate().is_err());
    }
}
