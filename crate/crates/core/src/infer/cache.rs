use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::Result;
use crate::nn::ParamStore;
use crate::transducer::Model;

/// Memo of label-encoder outputs keyed by the label context the encoder
/// actually reads. When disabled it still counts evaluations.
#[derive(Debug, Clone)]
pub struct LabelCache {
    enabled: bool,
    map: BTreeMap<Vec<usize>, Vec<f64>>,
    hits: u64,
    evaluations: u64,
}

impl Default for LabelCache {
    fn default() -> Self {
        Self::new()
    }
}

impl LabelCache {
    pub fn new() -> Self {
        Self {
            enabled: true,
            map: BTreeMap::new(),
            hits: 0,
            evaluations: 0,
        }
    }

    /// Pass-through: every request runs the label encoder.
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::new()
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn encode(&mut self, model: &Model, store: &ParamStore, prefix: &[usize]) -> Result<Vec<f64>> {
        if !self.enabled {
            self.evaluations += 1;
            return model.label.encode(store, prefix);
        }
        let key = model.label.key(prefix);
        if let Some(v) = self.map.get(&key) {
            self.hits += 1;
            return Ok(v.clone());
        }
        self.evaluations += 1;
        let v = model.label.encode(store, prefix)?;
        self.map.insert(key, v.clone());
        Ok(v)
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    /// Label-encoder runs performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Drops stored entries; counters keep running.
    pub fn clear(&mut self) {
        self.map.clear();
    }
}
