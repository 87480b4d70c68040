//! Std companion to `tt-core`: dataset and checkpoint files, run configs,
//! parallel training, evaluation, benchmarks and the threaded Y-model
//! schedule behind the `tt` command.

pub mod alignments;
pub mod bench;
pub mod checkpoint;
pub mod dataset;
mod error;
pub mod eval;
pub mod report;
pub mod runcfg;
pub mod training;
pub mod ysched;

pub use error::{CliError, Result};

use tt_core::attention::ContextConfig;
use tt_core::transducer::ModelConfig;

/// Context configuration from `[k] x m + ...` notation for `config`'s
/// encoder, with a uniform left context and output delay.
pub fn parse_context(config: &ModelConfig, text: &str, left: Option<usize>, output_delay: usize) -> Result<ContextConfig> {
    let rights = tt_core::train::parse_context_config(text, config.layers)?;
    Ok(ContextConfig::from_rights(rights)
        .with_left(left)
        .with_output_delay(output_delay)
        .with_frame_ms(config.frame_ms))
}
