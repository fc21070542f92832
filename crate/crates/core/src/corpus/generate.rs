use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Corpus, DomainSpec, FeatureMatrix, Utterance, Vocabulary};
use crate::ctc::Transcript;
use crate::error::{Error, Result};
use crate::io::{mix_seed, tag};

const WORD_LEN: [usize; 2] = [3, 8];
const SUCCESSOR_WEIGHTS: [f64; 4] = [0.45, 0.25, 0.18, 0.12];
const START_WORDS: usize = 8;

/// Deterministic prototype feature vector for a symbol.
pub fn symbol_prototype(symbol: usize, feature_dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        tag("prototype"),
        symbol as u64,
        feature_dim as u64,
    ]));
    (0..feature_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// A lexicon plus a first-order word grammar shared by every domain built
/// from the same `(lexicon_size, lexicon_seed)`.
///
/// Words are spelled from the vocabulary's letters, 3 to 8 letters long, with
/// no letter repeated back to back (so CTC alignments never need a separating
/// blank inside a word). Each word has a short list of weighted successors.
#[derive(Debug, Clone)]
pub struct Language {
    words: Vec<Vec<usize>>,
    successors: Vec<Vec<(usize, f64)>>,
    starts: Vec<(usize, f64)>,
}

impl Language {
    pub fn new(vocab: &Vocabulary, lexicon_size: usize, lexicon_seed: u64) -> Result<Self> {
        let letters = vocab.letter_indices();
        if letters.len() < 2 {
            return Err(Error::param("word generation needs at least two letters"));
        }
        if lexicon_size == 0 {
            return Err(Error::param("lexicon_size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[tag("lexicon"), lexicon_seed]));
        let mut seen = HashSet::new();
        let mut words = Vec::with_capacity(lexicon_size);
        let mut attempts = 0usize;
        while words.len() < lexicon_size {
            attempts += 1;
            if attempts > 1000 * lexicon_size {
                return Err(Error::param(format!(
                    "cannot draw {lexicon_size} distinct words from {} letters",
                    letters.len()
                )));
            }
            let len = rng.random_range(WORD_LEN[0]..=WORD_LEN[1]);
            let mut word: Vec<usize> = Vec::with_capacity(len);
            while word.len() < len {
                let l = letters[rng.random_range(0..letters.len())];
                if word.last() != Some(&l) {
                    word.push(l);
                }
            }
            if seen.insert(word.clone()) {
                words.push(word);
            }
        }

        let n = words.len();
        let k = SUCCESSOR_WEIGHTS.len().min(n.saturating_sub(1)).max(1);
        let successors = (0..n)
            .map(|w| {
                let mut chosen: Vec<usize> = Vec::with_capacity(k);
                while chosen.len() < k {
                    let c = rng.random_range(0..n);
                    if (c != w || n == 1) && !chosen.contains(&c) {
                        chosen.push(c);
                    }
                }
                chosen
                    .into_iter()
                    .zip(SUCCESSOR_WEIGHTS)
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut starts: Vec<(usize, f64)> = Vec::new();
        while starts.len() < START_WORDS.min(n) {
            let c = rng.random_range(0..n);
            if !starts.iter().any(|&(s, _)| s == c) {
                starts.push((c, 1.0));
            }
        }
        Ok(Language {
            words,
            successors,
            starts,
        })
    }

    pub fn words(&self) -> &[Vec<usize>] {
        &self.words
    }

    fn preference(&self, word: usize, bias: &[f64]) -> f64 {
        let letters = &self.words[word];
        let mut log_sum = 0.0;
        for &l in letters {
            if bias[l] <= 0.0 {
                return 0.0;
            }
            log_sum += bias[l].ln();
        }
        (log_sum / letters.len() as f64).exp()
    }

    fn pick(&self, options: &[(usize, f64)], bias: &[f64], rng: &mut ChaCha8Rng) -> usize {
        let weighted: Vec<f64> = options
            .iter()
            .map(|&(w, base)| base * self.preference(w, bias))
            .collect();
        let total: f64 = weighted.iter().sum();
        let (weights, total) = if total > 0.0 {
            (weighted, total)
        } else {
            let base: Vec<f64> = options.iter().map(|&(_, b)| b).collect();
            let t = base.iter().sum();
            (base, t)
        };
        let mut x = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return options[i].0;
            }
            x -= w;
        }
        options[options.len() - 1].0
    }

    /// Samples a sentence of `n_words` words, biased by per-symbol weights.
    pub fn sample_sentence(&self, n_words: usize, bias: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(n_words);
        let mut current = self.pick(&self.starts, bias, rng);
        out.push(current);
        while out.len() < n_words {
            current = self.pick(&self.successors[current], bias, rng);
            out.push(current);
        }
        out
    }

    /// Spells a word-index sentence as symbol tokens joined by `delimiter`.
    pub fn spell(&self, sentence: &[usize], delimiter: usize) -> Vec<usize> {
        let mut tokens = Vec::new();
        for (i, &w) in sentence.iter().enumerate() {
            if i > 0 {
                tokens.push(delimiter);
            }
            tokens.extend_from_slice(&self.words[w]);
        }
        tokens
    }
}

/// Generates a labelled corpus of `n_utts` utterances of `len_range` words
/// each.
///
/// Every symbol of the reference is rendered as `k` copies of its prototype
/// (`k` uniform in the domain's duration range); each frame is then mapped
/// through `frame * scale + shift + noise`. The result is a pure function of
/// the arguments.
pub fn generate_corpus(
    spec: &DomainSpec,
    vocab: &Vocabulary,
    n_utts: usize,
    len_range: [usize; 2],
) -> Result<Corpus> {
    if n_utts == 0 {
        return Err(Error::param("n_utts must be at least 1"));
    }
    if len_range[0] == 0 || len_range[0] > len_range[1] {
        return Err(Error::param(format!(
            "len_range [{}, {}] must satisfy 1 <= min <= max",
            len_range[0], len_range[1]
        )));
    }
    spec.validate(vocab)?;
    let language = Language::new(vocab, spec.lexicon_size, spec.lexicon_seed)?;
    let dim = spec.feature_dim();
    let prototypes: Vec<Vec<f64>> = (0..vocab.len()).map(|s| symbol_prototype(s, dim)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[tag("corpus"), spec.seed]));
    let [dur_lo, dur_hi] = spec.frames_per_symbol_range;

    let mut utterances = Vec::with_capacity(n_utts);
    for i in 0..n_utts {
        let n_words = rng.random_range(len_range[0]..=len_range[1]);
        let sentence = language.sample_sentence(n_words, &spec.symbol_unigram_bias, &mut rng);
        let tokens = language.spell(&sentence, vocab.delimiter_index());
        let offset: Vec<f64> = (0..dim)
            .map(|_| spec.utterance_shift_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut data = Vec::new();
        for &tok in &tokens {
            let k = rng.random_range(dur_lo..=dur_hi);
            for _ in 0..k {
                for d in 0..dim {
                    let noise = spec.noise_std * rng.sample::<f64, _>(StandardNormal);
                    let x = prototypes[tok][d] * spec.channel_scale[d]
                        + spec.channel_shift[d]
                        + offset[d]
                        + noise;
                    data.push(x as f32);
                }
            }
        }
        let rows = data.len() / dim;
        utterances.push(Utterance {
            id: format!("{}-{i:05}", spec.name),
            frames: FeatureMatrix::new(rows, dim, data)?,
            reference: Some(Transcript::from_tokens(tokens, vocab)?),
            domain_tag: spec.name.clone(),
        });
    }
    Corpus::new(spec.name.clone(), vocab.clone(), utterances, true)
}
