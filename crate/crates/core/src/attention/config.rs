use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right context used to stand in for "unbounded" lookahead.
pub const FULL_CONTEXT: usize = 1 << 20;

/// Default left context when running in streaming mode.
pub const STREAMING_LEFT: usize = 64;

/// Per-layer attention context lengths plus output delay.
///
/// Every entry is measured in frames of the layer it applies to; a layer
/// sitting after a stacking stage of factor `f` counts one frame as `f`
/// input frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub right: Vec<usize>,
    /// `None` is unbounded.
    pub left: Vec<Option<usize>>,
    pub output_delay: usize,
    pub frame_ms: f64,
}

impl ContextConfig {
    /// Unbounded left context, 30 ms frames, no output delay.
    pub fn from_rights(right: Vec<usize>) -> Self {
        let depth = right.len();
        Self {
            right,
            left: vec![None; depth],
            output_delay: 0,
            frame_ms: 30.0,
        }
    }

    pub fn causal(depth: usize) -> Self {
        Self::from_rights(vec![0; depth])
    }

    /// Full attention in both directions.
    pub fn full(depth: usize) -> Self {
        Self::from_rights(vec![FULL_CONTEXT; depth])
    }

    pub fn with_left(mut self, left: Option<usize>) -> Self {
        self.left = vec![left; self.right.len()];
        self
    }

    pub fn with_output_delay(mut self, frames: usize) -> Self {
        self.output_delay = frames;
        self
    }

    pub fn with_frame_ms(mut self, frame_ms: f64) -> Self {
        self.frame_ms = frame_ms;
        self
    }

    pub fn depth(&self) -> usize {
        self.right.len()
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.right.len() != depth || self.left.len() != depth {
            return Err(Error::DepthMismatch {
                expected: depth,
                got: if self.right.len() != depth {
                    self.right.len()
                } else {
                    self.left.len()
                },
            });
        }
        if !(self.frame_ms > 0.0) {
            return Err(Error::Invalid(alloc::format!(
                "frame_ms must be positive, got {}",
                self.frame_ms
            )));
        }
        Ok(())
    }

    /// Whether every left context is finite.
    pub fn has_finite_left(&self) -> bool {
        self.left.iter().all(Option::is_some)
    }

    /// Same rights and output delay, ignoring left context and frame size.
    pub fn same_lookahead(&self, other: &ContextConfig) -> bool {
        self.right == other.right && self.output_delay == other.output_delay
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_checks_depth_and_frame() {
        let c = ContextConfig::causal(3);
        assert!(c.validate(3).is_ok());
        assert_eq!(
            c.validate(4),
            Err(Error::DepthMismatch {
                expected: 4,
                got: 3
            })
        );
        assert!(c.clone().with_frame_ms(0.0).validate(3).is_err());
    }
}
