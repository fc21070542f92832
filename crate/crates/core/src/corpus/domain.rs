use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Vocabulary;
use crate::error::{Error, Result};

fn default_lexicon_size() -> usize {
    48
}

/// Parameters of one synthetic recording domain.
///
/// Stored on disk as flat `key = value` lines (TOML without tables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    /// One nonnegative weight per vocabulary symbol. Blank and delimiter
    /// entries are ignored; a word's sampling weight is the geometric mean of
    /// its letters' weights.
    pub symbol_unigram_bias: Vec<f64>,
    pub frames_per_symbol_range: [usize; 2],
    pub channel_shift: Vec<f64>,
    pub channel_scale: Vec<f64>,
    pub noise_std: f64,
    /// Standard deviation of a per-utterance offset added on top of
    /// `channel_shift`; zero keeps the channel fixed across the domain.
    #[serde(default)]
    pub utterance_shift_std: f64,
    pub seed: u64,
    /// Domains that agree on `lexicon_size` and `lexicon_seed` speak the same
    /// language and differ only in word preferences.
    #[serde(default = "default_lexicon_size")]
    pub lexicon_size: usize,
    #[serde(default)]
    pub lexicon_seed: u64,
}

impl DomainSpec {
    /// Identity channel, no noise, flat word preferences.
    pub fn neutral(name: impl Into<String>, vocab: &Vocabulary, feature_dim: usize, seed: u64) -> Self {
        DomainSpec {
            name: name.into(),
            symbol_unigram_bias: vec![1.0; vocab.len()],
            frames_per_symbol_range: [1, 1],
            channel_shift: vec![0.0; feature_dim],
            channel_scale: vec![1.0; feature_dim],
            noise_std: 0.0,
            utterance_shift_std: 0.0,
            seed,
            lexicon_size: default_lexicon_size(),
            lexicon_seed: 0,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.channel_shift.len()
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        let [lo, hi] = self.frames_per_symbol_range;
        if lo == 0 || lo > hi {
            return Err(Error::param(format!(
                "frames_per_symbol_range [{lo}, {hi}] must satisfy 1 <= min <= max"
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::param("noise_std must be finite and nonnegative"));
        }
        if !(self.utterance_shift_std >= 0.0) || !self.utterance_shift_std.is_finite() {
            return Err(Error::param("utterance_shift_std must be finite and nonnegative"));
        }
        if self.symbol_unigram_bias.len() != vocab.len() {
            return Err(Error::param(format!(
                "symbol_unigram_bias has {} weights for {} symbols",
                self.symbol_unigram_bias.len(),
                vocab.len()
            )));
        }
        if self
            .symbol_unigram_bias
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::param("symbol weights must be finite and nonnegative"));
        }
        if vocab
            .letter_indices()
            .iter()
            .all(|&i| self.symbol_unigram_bias[i] == 0.0)
        {
            return Err(Error::param("symbol weights are all zero"));
        }
        if self.channel_shift.is_empty() || self.channel_shift.len() != self.channel_scale.len() {
            return Err(Error::param(
                "channel_shift and channel_scale must be nonempty and equally long",
            ));
        }
        if self
            .channel_shift
            .iter()
            .chain(&self.channel_scale)
            .any(|x| !x.is_finite())
        {
            return Err(Error::param("channel transform must be finite"));
        }
        if self.lexicon_size == 0 {
            return Err(Error::param("lexicon_size must be positive"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("domain spec serializes")
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let record = e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "document".into());
            Error::format(origin, record, e.message())
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DomainSpec::from_text(&text, &path.display().to_string())
    }
}
