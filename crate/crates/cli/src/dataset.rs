//! Line-oriented dataset files: a header record describing the vocabulary
//! and generation settings, then one JSON record per utterance.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tt_core::data::{Dataset, GenParams, Utterance};
use tt_core::nn::Tensor2;
use tt_core::transducer::Vocab;

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    vocab: Vocab,
    frame_ms: f64,
    feature_dim: usize,
    seed: u64,
    params: GenParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    ref_times: Vec<usize>,
    frame_ms: f64,
}

impl From<&Utterance> for Record {
    fn from(u: &Utterance) -> Self {
        Self {
            id: u.id.clone(),
            features: (0..u.frames()).map(|t| u.features.row(t).to_vec()).collect(),
            labels: u.labels.clone(),
            ref_times: u.ref_times.clone(),
            frame_ms: u.frame_ms,
        }
    }
}

impl Record {
    fn into_utterance(self, dim: usize) -> std::result::Result<Utterance, String> {
        let mut features = Tensor2::empty(dim);
        for (t, row) in self.features.iter().enumerate() {
            features
                .push_row(row)
                .map_err(|_| format!("frame {t} has {} values, expected {dim}", row.len()))?;
        }
        Ok(Utterance {
            id: self.id,
            features,
            labels: self.labels,
            ref_times: self.ref_times,
            frame_ms: self.frame_ms,
        })
    }
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let header = Header {
        vocab: ds.vocab.clone(),
        frame_ms: ds.frame_ms,
        feature_dim: ds.feature_dim,
        seed: ds.seed,
        params: ds.params.clone(),
    };
    let mut line = |value: String| writeln!(w, "{value}").map_err(io_err(path));
    line(serde_json::to_string(&header).expect("header serializes"))?;
    for u in &ds.utterances {
        line(serde_json::to_string(&Record::from(u)).expect("record serializes"))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a dataset file. An empty file is an empty grapheme dataset.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let parse_err = |line: usize, msg: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut ds: Option<Dataset> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match ds.as_mut() {
            None => {
                let h: Header = serde_json::from_str(&line).map_err(|e| parse_err(n, format!("bad header: {e}")))?;
                let mut d = Dataset::empty(h.vocab, h.params, h.seed);
                d.frame_ms = h.frame_ms;
                d.feature_dim = h.feature_dim;
                ds = Some(d);
            }
            Some(d) => {
                let r: Record = serde_json::from_str(&line).map_err(|e| parse_err(n, format!("bad record: {e}")))?;
                let u = r.into_utterance(d.feature_dim).map_err(|m| parse_err(n, m))?;
                u.validate(&d.vocab).map_err(|e| parse_err(n, e.to_string()))?;
                if d.utterances.iter().any(|o| o.id == u.id) {
                    return Err(parse_err(n, format!("duplicate utterance id {:?}", u.id)));
                }
                d.utterances.push(u);
            }
        }
    }
    Ok(ds.unwrap_or_else(|| Dataset::empty(Vocab::graphemes(), GenParams::default(), 0)))
}
