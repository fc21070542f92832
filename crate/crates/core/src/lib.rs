//! Ensemble teacher-student pseudo-labelling with multi-stage students for
//! unsupervised domain adaptation of CTC sequence models.
//!
//! Several teacher models, each trained on a labelled source domain, label an
//! unlabelled target domain. Per utterance the most confident teacher is
//! picked, its posteriors are beam-search decoded with an n-gram language
//! model trained on source text, and a student is trained on the resulting
//! transcripts. The student then relabels the target and a fresh student is
//! trained on the new labels, stage after stage, until the test error stops
//! improving.

pub mod acoustic;
pub mod corpus;
pub mod decoder;
pub mod ctc;
pub mod error;
pub mod io;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod selection;

pub use corpus::{Corpus, DomainSpec, Utterance, Vocabulary};
pub use ctc::{PosteriorGrid, Transcript};
pub use error::{Error, Result};
