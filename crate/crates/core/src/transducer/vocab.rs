use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLANK: usize = 0;

/// Ordered symbol inventory. Id 0 is blank; the start-of-sequence context
/// reuses the blank id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    symbols: Vec<String>,
}

impl Vocab {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::Invalid("vocabulary needs blank plus one symbol".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::Invalid(alloc::format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Self { symbols })
    }

    /// `{blank, a–j, space}`, N = 12.
    pub fn graphemes() -> Self {
        let mut symbols = Vec::with_capacity(12);
        symbols.push("<b>".to_string());
        symbols.extend(('a'..='j').map(|c| c.to_string()));
        symbols.push(" ".to_string());
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn space_id(&self) -> Option<usize> {
        self.id_of(" ")
    }

    /// Non-blank ids usable as targets.
    pub fn targets(&self) -> impl Iterator<Item = usize> {
        1..self.symbols.len()
    }

    pub fn check(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.len()) {
            Some(&id) => Err(Error::LabelOutOfRange {
                id,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }

    /// Concatenates symbols, skipping blanks.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != BLANK)
            .filter_map(|&i| self.symbol(i))
            .collect()
    }

    /// Maps each character to a single-character symbol.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut buf = [0u8; 4];
        text.chars()
            .map(|c| {
                let s: &str = c.encode_utf8(&mut buf);
                self.id_of(s)
                    .filter(|&id| id != BLANK)
                    .ok_or_else(|| Error::Invalid(alloc::format!("symbol {s:?} not in vocabulary")))
            })
            .collect()
    }
}
