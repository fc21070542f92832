//! CTC prefix beam search with shallow word-LM fusion.
//!
//! A hypothesis is scored as
//!
//! ```text
//! ln p_AM(y|x) + alpha * ln p_LM(y) + beta * |y|
//! ```
//!
//! where `p_AM` sums every CTC path that collapses to the prefix, the LM is
//! applied each time a word delimiter closes a nonempty word (and once more
//! at the end of the utterance for the last word and the end-of-sentence
//! marker), and `|y|` counts words by default.

mod labels;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use labels::{load_labels, save_labels, Provenance, PseudoLabel};

use crate::corpus::Vocabulary;
use crate::ctc::{log_add, PosteriorGrid, Transcript};
use crate::error::{Error, Result};
use crate::lm::{LmState, NGramModel};
use crate::metrics;

/// Natural-log value of one log10 unit.
const LN_10: f64 = std::f64::consts::LN_10;

/// What the length bonus counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    Words,
    Graphemes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// LM weight.
    pub alpha: f64,
    /// Length bonus per unit.
    pub beta: f64,
    /// Symbols whose per-frame log probability falls below this are not
    /// expanded. The best symbol of each frame is always expanded.
    #[serde(default = "default_prune")]
    pub prune_log_threshold: f64,
    #[serde(default)]
    pub length_unit: LengthUnit,
}

pub const DEFAULT_BEAM_WIDTH: usize = 64;
pub const DEFAULT_PRUNE_LOG_THRESHOLD: f64 = -9.2;

fn default_prune() -> f64 {
    DEFAULT_PRUNE_LOG_THRESHOLD
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: DEFAULT_BEAM_WIDTH,
            alpha: 0.0,
            beta: 0.0,
            prune_log_threshold: DEFAULT_PRUNE_LOG_THRESHOLD,
            length_unit: LengthUnit::Words,
        }
    }
}

impl DecodeConfig {
    pub fn new(beam_width: usize, alpha: f64, beta: f64) -> Self {
        DecodeConfig {
            beam_width,
            alpha,
            beta,
            ..Default::default()
        }
    }

    /// Disables per-frame pruning.
    pub fn exhaustive(mut self) -> Self {
        self.prune_log_threshold = f64::NEG_INFINITY;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::param("beam_width must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha must be finite and non-negative"));
        }
        if !self.beta.is_finite() {
            return Err(Error::param("beta must be finite"));
        }
        if self.prune_log_threshold.is_nan() || self.prune_log_threshold > 0.0 {
            return Err(Error::param("prune_log_threshold must be at most 0"));
        }
        Ok(())
    }
}

/// Best hypothesis and its score components.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub transcript: Transcript,
    /// `am + alpha * lm + bonus`.
    pub total: f64,
    /// Natural-log acoustic score of the prefix (sum over its CTC paths
    /// retained by the search).
    pub am: f64,
    /// Natural-log LM probability of the word sequence including the end
    /// marker; zero when decoding without an LM.
    pub lm: f64,
    /// `beta * |y|`.
    pub bonus: f64,
    /// `|y|` in the configured unit.
    pub length: usize,
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<usize>,
    /// Hash of `tokens`, for merging equal prefixes without rehashing them.
    key: u64,
    p_blank: f64,
    p_nonblank: f64,
    /// LM state over completed words.
    lm_state: Option<LmState>,
    /// Natural-log LM score of completed words.
    lm_ln: f64,
    words: usize,
    letters: usize,
    /// Start of the word in progress within `tokens`.
    word_start: usize,
}

impl Hyp {
    fn am(&self) -> f64 {
        log_add(self.p_blank, self.p_nonblank)
    }

    fn length(&self, unit: LengthUnit) -> usize {
        match unit {
            LengthUnit::Words => self.words,
            LengthUnit::Graphemes => self.letters,
        }
    }
}

struct Search<'a> {
    lm: Option<&'a NGramModel>,
    config: &'a DecodeConfig,
    vocab: &'a Vocabulary,
    blank: usize,
    delim: usize,
}

impl Search<'_> {
    fn score(&self, h: &Hyp) -> f64 {
        h.am() + self.config.alpha * h.lm_ln + self.config.beta * h.length(self.config.length_unit) as f64
    }

    /// LM fields of `parent` extended by `symbol`.
    fn extend(&self, parent: &Hyp, symbol: usize) -> Hyp {
        let mut h = Hyp {
            tokens: Vec::with_capacity(parent.tokens.len() + 1),
            key: child_key(parent.key, symbol),
            p_blank: f64::NEG_INFINITY,
            p_nonblank: f64::NEG_INFINITY,
            lm_state: parent.lm_state.clone(),
            lm_ln: parent.lm_ln,
            words: parent.words,
            letters: parent.letters,
            word_start: parent.word_start,
        };
        h.tokens.extend_from_slice(&parent.tokens);
        h.tokens.push(symbol);
        if symbol == self.delim {
            if parent.word_start < parent.tokens.len() {
                let word = self.vocab.render(&parent.tokens[parent.word_start..]);
                self.close_word(&mut h, &word);
            }
            h.word_start = h.tokens.len();
        } else {
            h.letters += 1;
        }
        h
    }

    fn close_word(&self, h: &mut Hyp, word: &str) {
        h.words += 1;
        if let (Some(lm), Some(state)) = (self.lm, h.lm_state.as_ref()) {
            let (lp, next) = lm.score_word(state, word);
            h.lm_ln += lp * LN_10;
            h.lm_state = Some(next);
        }
    }

    /// Applies the trailing word and end marker.
    fn finish(&self, h: &mut Hyp) {
        if h.word_start < h.tokens.len() {
            let word = self.vocab.render(&h.tokens[h.word_start..]);
            self.close_word(h, &word);
            h.word_start = h.tokens.len();
        }
        if let (Some(lm), Some(state)) = (self.lm, h.lm_state.as_ref()) {
            let (lp, next) = lm.score_end(state);
            h.lm_ln += lp * LN_10;
            h.lm_state = Some(next);
        }
    }

    /// Keeps the best `keep` hypotheses, sorted best first: higher score,
    /// then rendered text, then tokens.
    fn rank(&self, hyps: &mut Vec<Hyp>, keep: usize) {
        let mut keyed: Vec<(f64, Hyp)> = hyps.drain(..).map(|h| (self.score(&h), h)).collect();
        let order = |a: &(f64, Hyp), b: &(f64, Hyp)| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.vocab.render(&a.1.tokens).cmp(&self.vocab.render(&b.1.tokens)))
                .then_with(|| a.1.tokens.cmp(&b.1.tokens))
        };
        if keyed.len() > keep {
            keyed.select_nth_unstable_by(keep - 1, order);
            keyed.truncate(keep);
        }
        keyed.sort_by(order);
        hyps.extend(keyed.into_iter().map(|(_, h)| h));
    }

    fn run(&self, grid: &PosteriorGrid) -> Decoded {
        let root = Hyp {
            tokens: Vec::new(),
            key: ROOT_KEY,
            p_blank: 0.0,
            p_nonblank: f64::NEG_INFINITY,
            lm_state: self.lm.map(NGramModel::begin_state),
            lm_ln: 0.0,
            words: 0,
            letters: 0,
            word_start: 0,
        };
        let mut beam = vec![root];
        let v = grid.num_symbols();
        for row in grid.rows() {
            let best = (0..v).fold(0, |b, s| if row[s] > row[b] { s } else { b });
            let symbols: Vec<usize> = (0..v)
                .filter(|&s| s == best || row[s] >= self.config.prune_log_threshold)
                .filter(|&s| row[s] > f64::NEG_INFINITY)
                .collect();
            let mut next: Vec<Hyp> = Vec::with_capacity(beam.len() * symbols.len());
            let mut index: HashMap<u64, usize> = HashMap::with_capacity(next.capacity());
            for h in &beam {
                let total = h.am();
                let last = h.tokens.last().copied();
                for &s in &symbols {
                    let lp = row[s];
                    if s == self.blank {
                        let i = slot(&mut next, &mut index, h, None, self);
                        next[i].p_blank = log_add(next[i].p_blank, total + lp);
                    } else if Some(s) == last {
                        // Repeat without an intervening blank merges into the
                        // same prefix; after a blank it extends.
                        let i = slot(&mut next, &mut index, h, None, self);
                        next[i].p_nonblank = log_add(next[i].p_nonblank, h.p_nonblank + lp);
                        let j = slot(&mut next, &mut index, h, Some(s), self);
                        next[j].p_nonblank = log_add(next[j].p_nonblank, h.p_blank + lp);
                    } else {
                        let j = slot(&mut next, &mut index, h, Some(s), self);
                        next[j].p_nonblank = log_add(next[j].p_nonblank, total + lp);
                    }
                }
            }
            next.retain(|h| h.am() > f64::NEG_INFINITY);
            self.rank(&mut next, self.config.beam_width);
            beam = next;
        }
        for h in &mut beam {
            self.finish(h);
        }
        self.rank(&mut beam, 1);
        let best = &beam[0];
        let length = best.length(self.config.length_unit);
        let transcript = Transcript::from_tokens(best.tokens.clone(), self.vocab)
            .expect("decoded tokens come from the vocabulary and exclude blank");
        Decoded {
            transcript,
            total: self.score(best),
            am: best.am(),
            lm: best.lm_ln,
            bonus: self.config.beta * length as f64,
            length,
        }
    }
}

const ROOT_KEY: u64 = 0xcbf2_9ce4_8422_2325;

fn child_key(parent: u64, symbol: usize) -> u64 {
    (parent ^ (symbol as u64 + 1)).wrapping_mul(0x0100_0000_01b3)
}

/// Whether `tokens` equals `parent` optionally followed by `symbol`.
fn is_prefix(tokens: &[usize], parent: &[usize], symbol: Option<usize>) -> bool {
    match symbol {
        None => tokens == parent,
        Some(s) => tokens.len() == parent.len() + 1 && tokens[..parent.len()] == *parent && tokens[parent.len()] == s,
    }
}

/// Index in `next` of `parent` (when `symbol` is `None`) or of `parent`
/// extended by `symbol`, creating an empty entry if needed.
fn slot(
    next: &mut Vec<Hyp>,
    index: &mut HashMap<u64, usize>,
    parent: &Hyp,
    symbol: Option<usize>,
    search: &Search<'_>,
) -> usize {
    let key = symbol.map_or(parent.key, |s| child_key(parent.key, s));
    let found = match index.get(&key) {
        Some(&i) if is_prefix(&next[i].tokens, &parent.tokens, symbol) => Some(i),
        // A hash collision: fall back to a scan.
        Some(_) => next.iter().position(|h| is_prefix(&h.tokens, &parent.tokens, symbol)),
        None => None,
    };
    if let Some(i) = found {
        return i;
    }
    let h = match symbol {
        None => Hyp {
            p_blank: f64::NEG_INFINITY,
            p_nonblank: f64::NEG_INFINITY,
            ..parent.clone()
        },
        Some(s) => search.extend(parent, s),
    };
    index.entry(key).or_insert(next.len());
    next.push(h);
    next.len() - 1
}

/// Decodes one grid. `lm` may be absent only when `alpha` is zero.
pub fn beam_search_decode(
    grid: &PosteriorGrid,
    lm: Option<&NGramModel>,
    config: &DecodeConfig,
    vocab: &Vocabulary,
) -> Result<Decoded> {
    config.validate()?;
    if lm.is_none() && config.alpha != 0.0 {
        return Err(Error::param("alpha must be 0 when decoding without a language model"));
    }
    if grid.num_symbols() != vocab.len() {
        return Err(Error::param(format!(
            "grid has {} symbols, vocabulary has {}",
            grid.num_symbols(),
            vocab.len()
        )));
    }
    let search = Search {
        lm,
        config,
        vocab,
        blank: vocab.blank_index(),
        delim: vocab.delimiter_index(),
    };
    Ok(search.run(grid))
}

/// Decodes many grids in parallel; output order follows input order.
pub fn decode_all(
    grids: &[PosteriorGrid],
    lm: Option<&NGramModel>,
    config: &DecodeConfig,
    vocab: &Vocabulary,
) -> Result<Vec<Decoded>> {
    grids
        .par_iter()
        .map(|g| beam_search_decode(g, lm, config, vocab))
        .collect()
}

/// Result of a grid search over `(alpha, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub config: DecodeConfig,
    pub wer: f64,
    /// Corpus WER for every evaluated `(alpha, beta)`.
    pub table: Vec<(f64, f64, f64)>,
}

/// Exhaustive search for the `(alpha, beta)` with the lowest pooled WER on
/// validation pairs; ties go to the smaller alpha, then the smaller beta.
/// Settings other than alpha and beta are taken from `base`.
pub fn tune_hyperparams(
    grids: &[PosteriorGrid],
    references: &[Transcript],
    lm: &NGramModel,
    alpha_grid: &[f64],
    beta_grid: &[f64],
    base: &DecodeConfig,
    vocab: &Vocabulary,
) -> Result<Tuning> {
    if grids.len() != references.len() {
        return Err(Error::param(format!(
            "{} grids but {} references",
            grids.len(),
            references.len()
        )));
    }
    if grids.is_empty() || alpha_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::param("tuning needs validation data and nonempty search grids"));
    }
    let mut alphas = alpha_grid.to_vec();
    let mut betas = beta_grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let mut best: Option<(f64, DecodeConfig)> = None;
    let mut table = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in &alphas {
        for &beta in &betas {
            let config = DecodeConfig { alpha, beta, ..*base };
            let decoded = decode_all(grids, Some(lm), &config, vocab)?;
            let pairs: Vec<(&Transcript, &Transcript)> =
                decoded.iter().map(|d| &d.transcript).zip(references).collect();
            let wer = metrics::corpus_wer(&pairs, vocab)?.wer;
            log::debug!("tune alpha={alpha} beta={beta}: wer={wer:.4}");
            table.push((alpha, beta, wer));
            if best.as_ref().is_none_or(|(b, _)| wer < *b) {
                best = Some((wer, config));
            }
        }
    }
    let (wer, config) = best.expect("search grids are nonempty");
    Ok(Tuning { config, wer, table })
}

#[cfg(test)]
mod tests;
