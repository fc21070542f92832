//! Utterances, corpora and the synthetic domain generator that stands in for
//! real recorded speech.
//!
//! Each utterance carries a `T x F` matrix of frame features rather than a
//! waveform. Domains differ by an affine channel transform on those frames,
//! additive noise, symbol durations and word statistics, which is enough to
//! make models trained on one domain degrade on another.

mod domain;
mod generate;
mod manifest;
mod vocab;

use std::collections::HashSet;

pub use domain::DomainSpec;
pub use generate::{generate_corpus, symbol_prototype, Language};
pub use manifest::{load_manifest, save_manifest};
pub use vocab::Vocabulary;

use crate::ctc::Transcript;
use crate::error::{Error, Result};

/// Row-major `rows x cols` matrix of 32-bit features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::param(format!(
                "feature buffer has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub frames: FeatureMatrix,
    pub reference: Option<Transcript>,
    pub domain_tag: String,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.frames.rows() == 0 {
            return Err(Error::param(format!("utterance {} has no frames", self.id)));
        }
        if self.frames.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::param(format!(
                "utterance {} has non-finite features",
                self.id
            )));
        }
        if let Some(r) = &self.reference {
            if r
                .tokens()
                .iter()
                .any(|&t| t >= vocab.len() || t == vocab.blank_index())
            {
                return Err(Error::param(format!(
                    "utterance {} reference uses symbols outside the vocabulary",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    vocabulary: Vocabulary,
    utterances: Vec<Utterance>,
    labelled: bool,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        vocabulary: Vocabulary,
        utterances: Vec<Utterance>,
        labelled: bool,
    ) -> Result<Self> {
        let name = name.into();
        let mut ids = HashSet::with_capacity(utterances.len());
        let mut dim = None;
        for u in &utterances {
            u.validate(&vocabulary)?;
            if !ids.insert(u.id.as_str()) {
                return Err(Error::param(format!("duplicate utterance id {}", u.id)));
            }
            if labelled && u.reference.is_none() {
                return Err(Error::param(format!(
                    "corpus {name} is labelled but utterance {} has no reference",
                    u.id
                )));
            }
            match dim {
                None => dim = Some(u.frames.cols()),
                Some(d) if d != u.frames.cols() => {
                    return Err(Error::param(format!(
                        "utterance {} has feature dim {}, expected {d}",
                        u.id,
                        u.frames.cols()
                    )))
                }
                _ => {}
            }
        }
        Ok(Corpus {
            name,
            vocabulary,
            utterances,
            labelled,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn labelled(&self) -> bool {
        self.labelled
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Feature dimension, or `None` for an empty corpus.
    pub fn feature_dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.frames.cols())
    }

    /// The same utterances with every reference removed.
    pub fn without_references(&self) -> Corpus {
        Corpus {
            name: self.name.clone(),
            vocabulary: self.vocabulary.clone(),
            utterances: self
                .utterances
                .iter()
                .map(|u| Utterance {
                    reference: None,
                    ..u.clone()
                })
                .collect(),
            labelled: false,
        }
    }

    /// Splits off the first `n` utterances into a separate corpus.
    pub fn split_at(&self, n: usize, head_name: &str, tail_name: &str) -> (Corpus, Corpus) {
        let n = n.min(self.len());
        let head = Corpus {
            name: head_name.to_string(),
            vocabulary: self.vocabulary.clone(),
            utterances: self.utterances[..n].to_vec(),
            labelled: self.labelled,
        };
        let tail = Corpus {
            name: tail_name.to_string(),
            vocabulary: self.vocabulary.clone(),
            utterances: self.utterances[n..].to_vec(),
            labelled: self.labelled,
        };
        (head, tail)
    }

    pub fn references(&self) -> Option<Vec<&Transcript>> {
        self.utterances.iter().map(|u| u.reference.as_ref()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, reference: Option<Transcript>) -> Utterance {
        Utterance {
            id: id.into(),
            frames: FeatureMatrix::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap(),
            reference,
            domain_tag: "d".into(),
        }
    }

    #[test]
    fn labelled_corpus_requires_every_reference() {
        let vocab = Vocabulary::graphemes(3).unwrap();
        let r = Transcript::parse("ab", &vocab).unwrap();
        let mut utts: Vec<_> = (0..100)
            .map(|i| utt(&format!("u{i}"), Some(r.clone())))
            .collect();
        assert!(Corpus::new("c", vocab.clone(), utts.clone(), true).is_ok());
        utts[57].reference = None;
        let err = Corpus::new("c", vocab.clone(), utts.clone(), true).unwrap_err();
        assert!(err.to_string().contains("u57"), "{err}");
        assert!(Corpus::new("c", vocab, utts, false).is_ok());
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_frames() {
        let vocab = Vocabulary::graphemes(3).unwrap();
        assert!(Corpus::new("c", vocab.clone(), vec![utt("a", None), utt("a", None)], false).is_err());
        let mut bad = utt("x", None);
        bad.frames = FeatureMatrix::new(1, 2, vec![f32::NAN, 0.0]).unwrap();
        assert!(Corpus::new("c", vocab.clone(), vec![bad], false).is_err());
        let mut empty = utt("y", None);
        empty.frames = FeatureMatrix::new(0, 2, vec![]).unwrap();
        assert!(Corpus::new("c", vocab, vec![empty], false).is_err());
    }
}
