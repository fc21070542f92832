//! Pseudo-label files: a JSON header line followed by one JSON record per
//! utterance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Decoded;
use crate::corpus::Vocabulary;
use crate::ctc::Transcript;
use crate::error::{Error, Result};
use crate::io;

const FORMAT: &str = "stagewise-labels";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    vocabulary_digest: String,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    transcript: String,
    total: f64,
    am: f64,
    lm: f64,
    bonus: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from: Option<Provenance>,
}

/// Which model produced a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Index of the selected teacher in the ensemble.
    Teacher(usize),
    /// The student trained at this stage.
    Stage(usize),
}

/// A decoded transcript used as a training target.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub utterance_id: String,
    pub transcript: Transcript,
    pub total: f64,
    pub am: f64,
    pub lm: f64,
    pub bonus: f64,
    pub provenance: Option<Provenance>,
}

impl PseudoLabel {
    pub fn from_decoded(utterance_id: impl Into<String>, d: &Decoded) -> Self {
        PseudoLabel {
            utterance_id: utterance_id.into(),
            transcript: d.transcript.clone(),
            total: d.total,
            am: d.am,
            lm: d.lm,
            bonus: d.bonus,
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }
}

fn clamp_finite(x: f64) -> f64 {
    // JSON has no infinities; they only arise for impossible hypotheses.
    if x.is_finite() {
        x
    } else {
        f64::MIN
    }
}

pub fn save_labels(labels: &[PseudoLabel], vocab: &Vocabulary, path: &Path) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        vocabulary_digest: vocab.digest(),
        count: labels.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for l in labels {
        let r = Record {
            id: l.utterance_id.clone(),
            transcript: l.transcript.rendered().to_string(),
            total: clamp_finite(l.total),
            am: clamp_finite(l.am),
            lm: clamp_finite(l.lm),
            bonus: clamp_finite(l.bonus),
            from: l.provenance,
        };
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    io::write_atomic(path, out.as_bytes())
}

pub fn load_labels(path: &Path, vocab: &Vocabulary) -> Result<Vec<PseudoLabel>> {
    let text = io::read_string(path)?;
    let origin = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::format(&origin, "line 1", "empty label file"))?;
    let header: Header = serde_json::from_str(first)
        .map_err(|e| Error::format(&origin, "line 1", format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::format(
            &origin,
            "line 1",
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    if header.vocabulary_digest != vocab.digest() {
        return Err(Error::format(
            &origin,
            "line 1",
            "labels were written for a different vocabulary",
        ));
    }
    let mut labels = Vec::with_capacity(header.count);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("line {}", i + 1);
        let r: Record = serde_json::from_str(line)
            .map_err(|e| Error::format(&origin, at.as_str(), e.to_string()))?;
        let transcript = Transcript::parse(&r.transcript, vocab)
            .map_err(|e| Error::format(&origin, format!("{at} ({})", r.id), e.to_string()))?;
        labels.push(PseudoLabel {
            utterance_id: r.id,
            transcript,
            total: r.total,
            am: r.am,
            lm: r.lm,
            bonus: r.bonus,
            provenance: r.from,
        });
    }
    if labels.len() != header.count {
        return Err(Error::format(
            &origin,
            "end of file",
            format!("header declares {} records, found {}", header.count, labels.len()),
        ));
    }
    Ok(labels)
}
