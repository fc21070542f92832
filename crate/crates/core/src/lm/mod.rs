//! Word-level n-gram language model with backoff.
//!
//! Probabilities are stored as log10 values following the ARPA convention.
//! Training uses absolute discounting: every seen n-gram gives up a fixed
//! discount `D` of count, and the freed mass is handed to the next lower
//! order through a per-context backoff weight chosen so each conditional
//! distribution sums to one.

mod arpa;
mod train;

use std::collections::HashMap;

pub use arpa::{load_arpa, save_arpa, parse_arpa, write_arpa};
pub use train::train_ngram;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// log10 probability used for the begin-of-sentence unigram, which is only
/// ever a context and never predicted.
pub const NEVER_PREDICTED: f64 = -99.0;

pub type WordId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramEntry {
    pub log_prob: f64,
    pub backoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    words: Vec<String>,
    ids: HashMap<String, WordId>,
    /// `grams[k - 1]` holds the k-grams.
    grams: Vec<HashMap<Vec<WordId>, GramEntry>>,
    bos: WordId,
    eos: WordId,
    unk: WordId,
}

/// Scoring state carried across words: the most recent `order - 1` words and
/// the running log10 score.
#[derive(Debug, Clone, PartialEq)]
pub struct LmState {
    context: Vec<WordId>,
    pub cumulative: f64,
}

impl LmState {
    pub fn context(&self) -> &[WordId] {
        &self.context
    }
}

impl NGramModel {
    pub(crate) fn from_parts(
        order: usize,
        words: Vec<String>,
        grams: Vec<HashMap<Vec<WordId>, GramEntry>>,
    ) -> Result<Self> {
        if order == 0 || grams.len() != order {
            return Err(Error::param("n-gram order must be at least 1"));
        }
        let ids: HashMap<String, WordId> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as WordId))
            .collect();
        let id = |w: &str| {
            ids.get(w)
                .copied()
                .ok_or_else(|| Error::param(format!("model lacks the {w} marker")))
        };
        let (bos, eos, unk) = (id(BOS)?, id(EOS)?, id(UNK)?);
        Ok(NGramModel {
            order,
            words,
            ids,
            grams,
            bos,
            eos,
            unk,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    /// Id of `word`, falling back to the unknown marker.
    pub fn word_id(&self, word: &str) -> WordId {
        self.ids.get(word).copied().unwrap_or(self.unk)
    }

    pub fn is_known(&self, word: &str) -> bool {
        self.ids.contains_key(word)
    }

    pub fn eos(&self) -> WordId {
        self.eos
    }

    pub fn num_grams(&self, k: usize) -> usize {
        self.grams.get(k.wrapping_sub(1)).map_or(0, HashMap::len)
    }

    pub fn entry(&self, gram: &[&str]) -> Option<GramEntry> {
        let ids: Option<Vec<WordId>> = gram.iter().map(|w| self.ids.get(*w).copied()).collect();
        let ids = ids?;
        self.grams.get(ids.len().checked_sub(1)?)?.get(&ids).copied()
    }

    /// Every stored n-gram as `(words, log10 prob, log10 backoff)`, sorted by
    /// order then words.
    pub fn entries(&self) -> Vec<(Vec<String>, GramEntry)> {
        let mut out: Vec<(Vec<String>, GramEntry)> = self
            .grams
            .iter()
            .flat_map(|m| {
                m.iter()
                    .map(|(k, e)| (k.iter().map(|&i| self.words[i as usize].clone()).collect(), *e))
            })
            .collect();
        out.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn begin_state(&self) -> LmState {
        let context = if self.order > 1 { vec![self.bos] } else { Vec::new() };
        LmState {
            context,
            cumulative: 0.0,
        }
    }

    /// Backoff-resolved log10 `p(word | context)`; only the last `order - 1`
    /// context words are consulted.
    pub fn log10_prob(&self, context: &[WordId], word: WordId) -> f64 {
        let keep = context.len().min(self.order - 1);
        let context = &context[context.len() - keep..];
        let mut key = [0 as WordId; 16];
        let mut backoff = 0.0;
        for start in 0..=context.len() {
            let ctx = &context[start..];
            let n = ctx.len();
            key[..n].copy_from_slice(ctx);
            key[n] = word;
            if let Some(e) = self.grams[n].get(&key[..=n]) {
                return backoff + e.log_prob;
            }
            if n > 0 {
                if let Some(e) = self.grams[n - 1].get(ctx) {
                    backoff += e.backoff.unwrap_or(0.0);
                }
            }
        }
        // Every model carries a unigram for the unknown marker.
        backoff
            + self.grams[0]
                .get(&[self.unk][..])
                .map_or(NEVER_PREDICTED, |e| e.log_prob)
    }

    pub fn score_id(&self, state: &LmState, word: WordId) -> (f64, LmState) {
        let lp = self.log10_prob(&state.context, word);
        let mut context = state.context.clone();
        if self.order > 1 {
            context.push(word);
            if context.len() > self.order - 1 {
                context.remove(0);
            }
        }
        (
            lp,
            LmState {
                context,
                cumulative: state.cumulative + lp,
            },
        )
    }

    /// Scores one word and advances the state. Unseen words resolve to the
    /// unknown marker.
    pub fn score_word(&self, state: &LmState, word: &str) -> (f64, LmState) {
        self.score_id(state, self.word_id(word))
    }

    /// Scores the end-of-sentence marker from `state`.
    pub fn score_end(&self, state: &LmState) -> (f64, LmState) {
        self.score_id(state, self.eos)
    }

    /// Full log10 sentence probability including the end marker.
    pub fn score_sentence<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        let mut lp = 0.0;
        let mut context = self.begin_state().context;
        for w in words {
            let id = self.word_id(w.as_ref());
            lp += self.log10_prob(&context, id);
            context.push(id);
        }
        lp + self.log10_prob(&context, self.eos)
    }
}
