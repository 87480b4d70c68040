//! `[k] x m + [k'] x m' + ...` right-context notation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::{ContextConfig, FULL_CONTEXT};
use crate::error::{Error, Result};
use crate::transducer::ModelConfig;

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::ConfigParse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, want: char) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(c) => Err(self.err(format!("expected '{want}', found '{c}'"))),
            None => Err(self.err(format!("expected '{want}', found end of input"))),
        }
    }

    /// A number or `full` (unbounded context).
    fn context(&mut self) -> Result<usize> {
        self.skip_ws();
        if self.text[self.pos..].starts_with("full") {
            self.pos += 4;
            return Ok(FULL_CONTEXT);
        }
        self.number()
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a number"));
        }
        self.text[start..self.pos]
            .parse()
            .map_err(|_| Error::ConfigParse {
                pos: start,
                msg: "number too large".into(),
            })
    }
}

/// Parses the notation into one right context per layer. `x`, `×` and
/// `*` all mean repetition; a missing repeat count means 1. `[full]` is an
/// unbounded right context.
pub fn parse_rights(text: &str) -> Result<Vec<usize>> {
    let mut c = Cursor { text, pos: 0 };
    let mut out = Vec::new();
    loop {
        c.expect('[')?;
        let k = c.context()?;
        c.expect(']')?;
        c.skip_ws();
        let m = match c.peek() {
            Some('x' | 'X' | '×' | '*') => {
                c.pos += c.peek().map_or(1, char::len_utf8);
                c.number()?
            }
            _ => 1,
        };
        if m == 0 {
            return Err(c.err("repeat count must be at least 1"));
        }
        out.extend(core::iter::repeat_n(k, m));
        c.skip_ws();
        match c.peek() {
            None => return Ok(out),
            Some('+') => c.pos += 1,
            Some(ch) => return Err(c.err(format!("unexpected '{ch}'"))),
        }
    }
}

/// Parses and checks the layer count.
pub fn parse_context_config(text: &str, depth: usize) -> Result<Vec<usize>> {
    let rights = parse_rights(text)?;
    if rights.len() != depth {
        return Err(Error::DepthMismatch {
            expected: depth,
            got: rights.len(),
        });
    }
    Ok(rights)
}

/// Canonical notation, run-length encoded: `[0] x 5 + [4]`.
pub fn format_rights(rights: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < rights.len() {
        let mut j = i;
        while j < rights.len() && rights[j] == rights[i] {
            j += 1;
        }
        let k = if rights[i] >= FULL_CONTEXT {
            String::from("full")
        } else {
            format!("{}", rights[i])
        };
        parts.push(if j - i == 1 {
            format!("[{k}]")
        } else {
            format!("[{k}] x {}", j - i)
        });
        i = j;
    }
    parts.join(" + ")
}

/// Lookahead in input frames: each right context scaled by its layer's
/// frame rate. Output delay is not included.
pub fn lookahead_frames(config: &ModelConfig, cfg: &ContextConfig) -> usize {
    cfg.right
        .iter()
        .enumerate()
        .map(|(i, &r)| r.saturating_mul(config.layer_rate(i)))
        .fold(0usize, usize::saturating_add)
}

/// Cumulative lookahead in milliseconds for an encoder without stacking.
pub fn cumulative_lookahead(cfg: &ContextConfig) -> f64 {
    cfg.right.iter().fold(0usize, |a, &r| a.saturating_add(r)) as f64 * cfg.frame_ms
}

/// Cumulative lookahead in milliseconds, converting layers after a
/// stacking stage to input-frame units.
pub fn cumulative_lookahead_for(config: &ModelConfig, cfg: &ContextConfig) -> f64 {
    lookahead_frames(config, cfg) as f64 * cfg.frame_ms
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn notation_examples() {
        let r = parse_context_config("[0] x 15 + [8] x 5", 20).unwrap();
        assert_eq!(r, [vec![0; 15], vec![8; 5]].concat());
        let r = parse_context_config("[0] x 19 + [4]", 20).unwrap();
        assert_eq!(r, [vec![0; 19], vec![4]].concat());
        assert_eq!(parse_context_config("[4] x 20", 20).unwrap(), vec![4; 20]);
    }

    #[test]
    fn notation_variants() {
        assert_eq!(parse_rights("[0]x5+[4]").unwrap(), vec![0, 0, 0, 0, 0, 4]);
        assert_eq!(parse_rights("[1] × 2 + [3] * 1").unwrap(), vec![1, 1, 3]);
        assert_eq!(parse_rights("[full] x 2").unwrap(), vec![FULL_CONTEXT; 2]);
    }

    #[test]
    fn notation_errors() {
        assert!(matches!(parse_rights("[0] x"), Err(Error::ConfigParse { .. })));
        assert!(matches!(parse_rights("0 x 3"), Err(Error::ConfigParse { pos: 0, .. })));
        assert!(parse_rights("[0] x 0").is_err());
        assert!(parse_rights("[0] [1]").is_err());
        assert!(matches!(
            parse_context_config("[0] x 3", 4),
            Err(Error::DepthMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn format_round_trips() {
        for text in ["[0] x 5 + [4]", "[2] x 6", "[1] + [0] + [1]", "[full] x 3 + [0]"] {
            assert_eq!(format_rights(&parse_rights(text).unwrap()), text);
        }
    }

    #[test]
    fn lookahead_ms() {
        let cfg = |k| ContextConfig::from_rights(vec![k; 20]);
        assert_eq!(cumulative_lookahead(&cfg(4)), 2400.0);
        assert_eq!(cumulative_lookahead(&cfg(0)), 0.0);
        assert_eq!(cumulative_lookahead(&cfg(2)), 1200.0);
    }

    #[test]
    fn lookahead_counts_stacked_layers_at_input_rate() {
        let mut m = ModelConfig::default();
        m.stack = Some(crate::transducer::StackSpec {
            after_layers: 1,
            factor: 2,
        });
        let cfg = ContextConfig::from_rights(vec![1, 1, 0, 0, 0, 2]);
        assert_eq!(lookahead_frames(&m, &cfg), 1 + 2 + 4);
        assert_eq!(cumulative_lookahead_for(&m, &cfg), 7.0 * 30.0);
    }
}
