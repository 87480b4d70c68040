//! JSON-lines output and plain-text tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use tt_core::metrics::{BenchMode, BenchRow};

use crate::error::{io_err, Result};

/// Appends one JSON record per line to a file, or to stdout when no path
/// is given.
pub struct JsonLines {
    out: Box<dyn Write>,
}

impl JsonLines {
    pub fn create(path: Option<&Path>) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
            None => Box::new(std::io::stdout()),
        };
        Ok(Self { out })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Left-aligned text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push('\n');
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out.push('\n');
    out
}

/// Benchmark rows as a mode × step grid of encode times in seconds.
pub fn bench_grid(rows: &[BenchRow]) -> String {
    let mut steps: Vec<usize> = rows.iter().map(|r| r.step).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut header = vec!["mode".to_string()];
    header.extend(steps.iter().map(|s| format!("step={s}")));
    let mut body = Vec::new();
    for mode in [BenchMode::Training, BenchMode::QuerySlice, BenchMode::BatchStep] {
        if !rows.iter().any(|r| r.mode == mode) {
            continue;
        }
        let mut line = vec![mode.to_string()];
        for s in &steps {
            let cell = rows
                .iter()
                .find(|r| r.mode == mode && r.step == *s)
                .map_or("-".to_string(), |r| format!("{:.4}", r.wall_seconds));
            line.push(cell);
        }
        body.push(line);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    table(&header, &body)
}
