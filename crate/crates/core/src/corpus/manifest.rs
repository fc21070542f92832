//! Corpus manifests: a line-delimited JSON text file describing the corpus and
//! its utterances, plus a sidecar of little-endian `f32` frames.
//!
//! ```text
//! {"format":"stagewise-manifest","version":1,"name":...,"vocabulary":{...},...}
//! {"id":"u0","domain_tag":"d","offset":0,"frames":12,"reference":"ab c"}
//! ...
//! ```
//!
//! `offset` and `frames` count rows of the sidecar; rows are `feature_dim`
//! floats each, row-major, utterances concatenated in table order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Corpus, FeatureMatrix, Utterance, Vocabulary};
use crate::ctc::Transcript;
use crate::error::{Error, Result};
use crate::io;

const FORMAT: &str = "stagewise-manifest";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    name: String,
    labelled: bool,
    feature_dim: usize,
    vocabulary: Vocabulary,
    frames_file: String,
    utterances: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    domain_tag: String,
    offset: usize,
    frames: usize,
    reference: Option<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".f32");
    path.with_file_name(name)
}

pub fn save_manifest(corpus: &Corpus, path: &Path) -> Result<()> {
    let sidecar = sidecar_path(path);
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        name: corpus.name().to_string(),
        labelled: corpus.labelled(),
        feature_dim: corpus.feature_dim().unwrap_or(0),
        vocabulary: corpus.vocabulary().clone(),
        frames_file: sidecar
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        utterances: corpus.len(),
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    let mut blob = Vec::new();
    let mut offset = 0;
    for u in corpus.utterances() {
        let rec = Record {
            id: u.id.clone(),
            domain_tag: u.domain_tag.clone(),
            offset,
            frames: u.num_frames(),
            reference: u.reference.as_ref().map(|r| r.rendered().to_string()),
        };
        text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        text.push('\n');
        io::push_f32s(&mut blob, u.frames.as_slice().iter().copied());
        offset += u.num_frames();
    }
    io::write_atomic(&sidecar, &blob)?;
    io::write_atomic(path, text.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<Corpus> {
    let origin = path.display().to_string();
    let text = io::read_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::format(&origin, "line 1", "missing header"))?;
    let header: Header = serde_json::from_str(first)
        .map_err(|e| Error::format(&origin, "line 1 (header)", e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::format(
            &origin,
            "line 1 (header)",
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let sidecar = path.with_file_name(&header.frames_file);
    let values = io::f32s_from_le(&io::read(&sidecar)?);
    let dim = header.feature_dim;

    let mut utterances = Vec::with_capacity(header.utterances);
    let mut next_offset = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let where_ = format!("line {}", i + 1);
        let rec: Record =
            serde_json::from_str(line).map_err(|e| Error::format(&origin, &where_, e.to_string()))?;
        let where_ = format!("line {} (utterance {})", i + 1, rec.id);
        if rec.offset != next_offset {
            return Err(Error::format(
                &origin,
                &where_,
                format!("offset {} does not follow previous record ({next_offset})", rec.offset),
            ));
        }
        let start = rec.offset * dim;
        let end = start + rec.frames * dim;
        if end > values.len() {
            return Err(Error::format(
                &origin,
                &where_,
                format!("frames extend past end of {}", sidecar.display()),
            ));
        }
        let frames = FeatureMatrix::new(rec.frames, dim, values[start..end].to_vec())?;
        let reference = rec
            .reference
            .as_deref()
            .map(|r| Transcript::parse(r, &header.vocabulary))
            .transpose()
            .map_err(|e| Error::format(&origin, &where_, e.to_string()))?;
        next_offset += rec.frames;
        utterances.push(Utterance {
            id: rec.id,
            frames,
            reference,
            domain_tag: rec.domain_tag,
        });
    }
    if utterances.len() != header.utterances {
        return Err(Error::format(
            &origin,
            "end of file",
            format!(
                "header declares {} utterances, found {}",
                header.utterances,
                utterances.len()
            ),
        ));
    }
    if next_offset * dim != values.len() {
        return Err(Error::format(
            &origin,
            "end of file",
            format!("{} has trailing data", sidecar.display()),
        ));
    }
    Corpus::new(header.name, header.vocabulary, utterances, header.labelled).map_err(|e| {
        Error::format(&origin, "corpus", e.to_string())
    })
}
