use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grapheme inventory shared by corpora, acoustic models and decoders.
///
/// Symbols are unique, non-empty and free of tab/newline characters so they
/// can be embedded in the line-oriented file formats. One symbol is the CTC
/// blank and a different one is the word delimiter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    symbols: Vec<String>,
    blank_index: usize,
    word_delimiter: String,
    delimiter_index: usize,
    lookup: HashMap<String, usize>,
    max_symbol_len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyRepr {
    symbols: Vec<String>,
    blank_index: usize,
    word_delimiter: String,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::new(r.symbols, r.blank_index, r.word_delimiter)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            symbols: v.symbols,
            blank_index: v.blank_index,
            word_delimiter: v.word_delimiter,
        }
    }
}

impl Vocabulary {
    pub fn new(
        symbols: Vec<String>,
        blank_index: usize,
        word_delimiter: impl Into<String>,
    ) -> Result<Self> {
        let word_delimiter = word_delimiter.into();
        if blank_index >= symbols.len() {
            return Err(Error::param(format!(
                "blank index {blank_index} out of range for {} symbols",
                symbols.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::param(format!("symbol {i} is empty")));
            }
            if s.contains(['\t', '\n', '\r']) {
                return Err(Error::param(format!(
                    "symbol {i} ({s:?}) contains a tab or newline"
                )));
            }
            if lookup.insert(s.clone(), i).is_some() {
                return Err(Error::param(format!("duplicate symbol {s:?}")));
            }
        }
        let delimiter_index = *lookup.get(&word_delimiter).ok_or_else(|| {
            Error::param(format!("word delimiter {word_delimiter:?} is not a symbol"))
        })?;
        if delimiter_index == blank_index {
            return Err(Error::param("word delimiter must differ from the blank"));
        }
        let max_symbol_len = symbols.iter().map(|s| s.len()).max().unwrap_or(1);
        Ok(Vocabulary {
            symbols,
            blank_index,
            word_delimiter,
            delimiter_index,
            lookup,
            max_symbol_len,
        })
    }

    /// Blank at index 0, a space delimiter at index 1, then `letters`
    /// lowercase ASCII letters starting from `a`.
    pub fn graphemes(letters: usize) -> Result<Self> {
        if letters == 0 || letters > 26 {
            return Err(Error::param("letter count must be in 1..=26"));
        }
        let mut symbols = vec!["<blank>".to_string(), " ".to_string()];
        symbols.extend((0..letters).map(|i| ((b'a' + i as u8) as char).to_string()));
        Vocabulary::new(symbols, 0, " ")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.lookup.get(symbol).copied()
    }

    pub fn blank_index(&self) -> usize {
        self.blank_index
    }

    pub fn word_delimiter(&self) -> &str {
        &self.word_delimiter
    }

    pub fn delimiter_index(&self) -> usize {
        self.delimiter_index
    }

    /// Indices of every symbol that is neither blank nor delimiter.
    pub fn letter_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| i != self.blank_index && i != self.delimiter_index)
            .collect()
    }

    /// Splits `text` into symbol indices by greedy longest match.
    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        let mut tokens = Vec::new();
        let mut rest = text;
        'outer: while !rest.is_empty() {
            let mut len = self.max_symbol_len.min(rest.len());
            while len > 0 {
                if rest.is_char_boundary(len) {
                    if let Some(&i) = self.lookup.get(&rest[..len]) {
                        tokens.push(i);
                        rest = &rest[len..];
                        continue 'outer;
                    }
                }
                len -= 1;
            }
            return Err(Error::param(format!(
                "cannot tokenize {text:?}: no symbol matches at {rest:?}"
            )));
        }
        Ok(tokens)
    }

    pub fn render(&self, tokens: &[usize]) -> String {
        tokens.iter().map(|&t| self.symbols[t].as_str()).collect()
    }

    /// Groups tokens into words separated by the delimiter; empty words
    /// (leading, trailing or doubled delimiters) are dropped.
    pub fn words(&self, tokens: &[usize]) -> Vec<String> {
        tokens
            .split(|&t| t == self.delimiter_index)
            .filter(|w| !w.is_empty())
            .map(|w| self.render(w))
            .collect()
    }

    /// Stable digest of the symbol inventory, used to match checkpoints to
    /// vocabularies.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for s in &self.symbols {
            h.update(s.as_bytes());
            h.update([0u8]);
        }
        h.update(self.blank_index.to_le_bytes());
        h.update(self.delimiter_index.to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(symbols: &[&str]) -> Vec<String> {
        symbols.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_bad_inventories() {
        assert!(Vocabulary::new(v(&["_", " ", "a"]), 3, " ").is_err());
        assert!(Vocabulary::new(v(&["_", " ", "a", "a"]), 0, " ").is_err());
        assert!(Vocabulary::new(v(&["_", "", "a"]), 0, "a").is_err());
        assert!(Vocabulary::new(v(&["_", " ", "a"]), 0, "|").is_err());
        assert!(Vocabulary::new(v(&["_", " ", "a"]), 1, " ").is_err());
        assert!(Vocabulary::new(v(&["_", "\t", "a"]), 0, "a").is_err());
        assert!(Vocabulary::new(v(&["_", " ", "a"]), 0, " ").is_ok());
    }

    #[test]
    fn tokenize_prefers_longest_symbol() {
        let vocab = Vocabulary::new(v(&["<b>", "|", "a", "ab", "b"]), 0, "|").unwrap();
        assert_eq!(vocab.tokenize("abab|b").unwrap(), vec![3, 3, 1, 4]);
        assert!(vocab.tokenize("abc").is_err());
        assert_eq!(vocab.render(&[3, 1, 2]), "ab|a");
    }

    #[test]
    fn words_drop_empty_segments() {
        let vocab = Vocabulary::graphemes(3).unwrap();
        let toks = vocab.tokenize(" ab  c ").unwrap();
        assert_eq!(vocab.words(&toks), vec!["ab".to_string(), "c".to_string()]);
    }

    #[test]
    fn serde_validates() {
        let bad = r#"{"symbols":["x","x"],"blank_index":0,"word_delimiter":"x"}"#;
        assert!(serde_json::from_str::<Vocabulary>(bad).is_err());
        let vocab = Vocabulary::graphemes(4).unwrap();
        let json = serde_json::to_string(&vocab).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), vocab);
    }
}
