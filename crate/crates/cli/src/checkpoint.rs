//! Binary checkpoint: magic, format version, a JSON header with the model
//! configuration, then every named parameter as shape plus little-endian
//! f64 values in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tt_core::attention::ContextConfig;
use tt_core::nn::{ParamStore, Tensor2};
use tt_core::transducer::{Model, ModelConfig};

use crate::error::{io_err, CliError, Result};

const MAGIC: &[u8; 8] = b"TTCKPT\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    /// Configuration decoding uses when none is given.
    pub default_context: ContextConfig,
    /// Optimizer steps taken when the checkpoint was written.
    pub steps: u64,
}

pub fn encode_checkpoint(header: &CheckpointHeader, store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(header).expect("header serializes");
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (name, t) in store.named_values() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "length overflows".to_string())
    }
}

/// Decodes a checkpoint and rebuilds the model it describes.
pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<(CheckpointHeader, Model, ParamStore), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err("not a checkpoint file".into());
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let n = c.len()?;
    let header: CheckpointHeader = serde_json::from_slice(c.take(n)?).map_err(|e| format!("bad header: {e}"))?;
    let count = c.len()?;
    let mut named = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let n = c.len()?;
        let name = std::str::from_utf8(c.take(n)?).map_err(|_| "parameter name is not UTF-8")?.to_string();
        let (rows, cols) = (c.len()?, c.len()?);
        let size = rows.checked_mul(cols).ok_or("parameter shape overflows")?;
        let raw = c.take(size.checked_mul(8).ok_or("parameter shape overflows")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        named.push((name, Tensor2::from_vec(rows, cols, data).map_err(|e| e.to_string())?));
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    let (model, mut store) = Model::new(header.config.clone(), 0).map_err(|e| e.to_string())?;
    store.load_values(&named).map_err(|e| e.to_string())?;
    Ok((header, model, store))
}

pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, store: &ParamStore) -> Result<()> {
    fs::write(path, encode_checkpoint(header, store)).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Model, ParamStore)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_checkpoint(&bytes).map_err(|msg| CliError::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}
