//! TOML run specification for `tt train`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tt_core::train::{ConstraintWindow, LossMode, TrainOptions};
use tt_core::transducer::ModelConfig;

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Plain,
    Constrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Omit to disable clipping.
    pub clip_norm: Option<f64>,
    pub mode: ModeName,
    /// Constraint window around reference emissions; omit for unbounded.
    pub w_left: Option<usize>,
    pub w_right: Option<usize>,
    pub word_windows: bool,
    /// Left context applied to every menu entry; omit for unbounded.
    pub left_context: Option<usize>,
    pub per_layer_sampling: bool,
    /// Constrain against the dataset's onset times instead of a reference
    /// checkpoint.
    pub onset_reference: bool,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let w = ConstraintWindow::default();
        Self {
            steps: 2000,
            batch_size: 8,
            lr: 1e-3,
            clip_norm: Some(5.0),
            mode: ModeName::Plain,
            w_left: w.w_left,
            w_right: w.w_right,
            word_windows: w.words,
            left_context: None,
            per_layer_sampling: false,
            onset_reference: false,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Training dataset file.
    pub data: PathBuf,
    /// Checkpoint to write.
    pub out: PathBuf,
    /// Training log (JSON lines); omit to skip.
    #[serde(default)]
    pub log: Option<PathBuf>,
    /// Full-context reference checkpoint for constrained training.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    /// Cache of the reference model's alignments: read if present,
    /// written otherwise.
    #[serde(default)]
    pub alignments: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
}

impl RunConfig {
    /// Parses a run file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data);
        resolve(&mut cfg.out);
        cfg.log.as_mut().map(resolve);
        cfg.reference.as_mut().map(resolve);
        cfg.alignments.as_mut().map(resolve);
        cfg.model.validate().map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if cfg.train.mode == ModeName::Constrained && cfg.reference.is_none() == !cfg.train.onset_reference {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                msg: "constrained mode needs exactly one of a reference checkpoint or onset_reference".into(),
            });
        }
        Ok(cfg)
    }

    pub fn options(&self) -> TrainOptions {
        let t = &self.train;
        TrainOptions {
            lr: t.lr,
            batch_size: t.batch_size,
            seed: self.seed,
            mode: match t.mode {
                ModeName::Plain => LossMode::Plain,
                ModeName::Constrained => LossMode::Constrained(ConstraintWindow {
                    w_left: t.w_left,
                    w_right: t.w_right,
                    words: t.word_windows,
                }),
            },
            clip_norm: t.clip_norm,
            per_layer_sampling: t.per_layer_sampling,
        }
    }
}
