use alloc::vec::Vec;

use rand::Rng;

use super::notation::{lookahead_frames, parse_context_config};
use crate::attention::ContextConfig;
use crate::error::{Error, Result};
use crate::transducer::ModelConfig;

/// Context configurations a model trains under; one is drawn per batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigMenu {
    entries: Vec<ContextConfig>,
}

impl ConfigMenu {
    pub fn new(entries: Vec<ContextConfig>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::Empty("config menu"));
        };
        if let Some(bad) = entries.iter().find(|c| c.depth() != first.depth()) {
            return Err(Error::DepthMismatch {
                expected: first.depth(),
                got: bad.depth(),
            });
        }
        Ok(Self { entries })
    }

    /// Menu from the model's notation strings, with the given left context
    /// on every layer.
    pub fn from_model(config: &ModelConfig, left: Option<usize>) -> Result<Self> {
        let entries = config
            .menu
            .iter()
            .map(|s| {
                Ok(ContextConfig::from_rights(parse_context_config(s, config.layers)?)
                    .with_left(left)
                    .with_frame_ms(config.frame_ms))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ContextConfig] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry with the most lookahead (first one on ties).
    pub fn max_lookahead<'a>(&'a self, config: &ModelConfig) -> &'a ContextConfig {
        let mut best = &self.entries[0];
        for e in &self.entries[1..] {
            if lookahead_frames(config, e) > lookahead_frames(config, best) {
                best = e;
            }
        }
        best
    }

    /// Entry with the least lookahead (first one on ties).
    pub fn min_lookahead<'a>(&'a self, config: &ModelConfig) -> &'a ContextConfig {
        let mut best = &self.entries[0];
        for e in &self.entries[1..] {
            if lookahead_frames(config, e) < lookahead_frames(config, best) {
                best = e;
            }
        }
        best
    }
}

/// Uniform draw from the menu.
pub fn sample_config<'a, R: Rng + ?Sized>(menu: &'a ConfigMenu, rng: &mut R) -> &'a ContextConfig {
    &menu.entries[rng.random_range(0..menu.entries.len())]
}

/// Experiments only: draws every layer's right context independently from
/// the values the menu uses at that layer. Known to destabilize training.
pub fn sample_per_layer<R: Rng + ?Sized>(menu: &ConfigMenu, rng: &mut R) -> ContextConfig {
    let mut cfg = menu.entries[0].clone();
    for i in 0..cfg.depth() {
        let pick = &menu.entries[rng.random_range(0..menu.entries.len())];
        cfg.right[i] = pick.right[i];
        cfg.left[i] = pick.left[i];
    }
    cfg
}

/// Whether `cfg`'s right contexts match one of the model's menu entries.
pub fn menu_contains(config: &ModelConfig, cfg: &ContextConfig) -> bool {
    config
        .menu
        .iter()
        .filter_map(|s| parse_context_config(s, config.layers).ok())
        .any(|r| r == cfg.right)
}
