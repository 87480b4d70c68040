//! Per-utterance alignment files (JSON lines of id + emission frames).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tt_core::rnnt::AlignmentPath;

use crate::error::{io_err, CliError, Result};
use crate::report::JsonLines;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub id: String,
    pub emissions: Vec<usize>,
    pub log_prob: f64,
}

pub fn write_alignments(path: &Path, refs: &BTreeMap<String, AlignmentPath>) -> Result<()> {
    let mut out = JsonLines::create(Some(path))?;
    for (id, p) in refs {
        out.write(&AlignmentRecord {
            id: id.clone(),
            emissions: p.emissions.clone(),
            log_prob: p.log_prob,
        })
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_alignments(path: &Path) -> Result<BTreeMap<String, AlignmentPath>> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AlignmentRecord = serde_json::from_str(&line).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.insert(
            r.id,
            AlignmentPath {
                emissions: r.emissions,
                log_prob: r.log_prob,
            },
        );
    }
    Ok(out)
}
