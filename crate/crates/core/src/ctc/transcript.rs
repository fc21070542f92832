use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// A label sequence over a vocabulary, blank excluded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transcript {
    tokens: Vec<usize>,
    rendered: String,
}

impl Transcript {
    pub fn from_tokens(tokens: Vec<usize>, vocab: &Vocabulary) -> Result<Self> {
        for &t in &tokens {
            if t >= vocab.len() {
                return Err(Error::param(format!(
                    "token {t} out of range for vocabulary of {}",
                    vocab.len()
                )));
            }
            if t == vocab.blank_index() {
                return Err(Error::param("transcripts may not contain the blank"));
            }
        }
        let rendered = vocab.render(&tokens);
        Ok(Transcript { tokens, rendered })
    }

    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self> {
        Transcript::from_tokens(vocab.tokenize(text)?, vocab)
    }

    pub fn empty() -> Self {
        Transcript {
            tokens: Vec::new(),
            rendered: String::new(),
        }
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self, vocab: &Vocabulary) -> Vec<String> {
        vocab.words(&self.tokens)
    }

    /// Number of adjacent equal labels; each one forces an extra blank frame
    /// in any CTC alignment.
    pub fn repeats(&self) -> usize {
        self.tokens.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Minimum number of frames a CTC alignment of this transcript needs.
    pub fn min_frames(&self) -> usize {
        self.tokens.len() + self.repeats()
    }
}

impl std::fmt::Display for Transcript {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.rendered)
    }
}
