//! Checkpoint layout: the magic `SWAM`, a little-endian `u32` header length,
//! a JSON header, then the parameters as little-endian `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AcousticModel;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::io;

const MAGIC: &[u8; 4] = b"SWAM";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    input_dim: usize,
    context_window: usize,
    hidden_dims: Vec<usize>,
    output_dim: usize,
    vocabulary: Vocabulary,
    vocabulary_digest: String,
    seed: u64,
    parameter_count: usize,
    parameters_sha256: String,
}

/// Serializes to bytes; parameters are written at `f32` precision.
pub(crate) fn to_bytes(model: &AcousticModel) -> Vec<u8> {
    let mut blob = Vec::with_capacity(model.parameters().len() * 4);
    io::push_f32s(&mut blob, model.parameters().iter().map(|&p| p as f32));
    let header = Header {
        version: VERSION,
        input_dim: model.input_dim(),
        context_window: model.context_window(),
        hidden_dims: model.hidden_dims().to_vec(),
        output_dim: model.output_dim(),
        vocabulary: model.vocabulary().clone(),
        vocabulary_digest: model.vocabulary().digest(),
        seed: model.seed(),
        parameter_count: model.parameters().len(),
        parameters_sha256: io::sha256_hex(&blob),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    out
}

pub fn save_checkpoint(model: &AcousticModel, path: &Path) -> Result<()> {
    io::write_atomic(path, &to_bytes(model))
}

pub fn load_checkpoint(path: &Path) -> Result<AcousticModel> {
    let bytes = io::read(path)?;
    let origin = path.display().to_string();
    let fmt = |msg: String| Error::format(&origin, "header", msg);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(fmt("not a model checkpoint".into()));
    }
    let hlen = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let json = bytes
        .get(8..8 + hlen)
        .ok_or_else(|| fmt("truncated header".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| fmt(e.to_string()))?;
    if header.version != VERSION {
        return Err(fmt(format!("unsupported checkpoint version {}", header.version)));
    }
    if header.vocabulary.digest() != header.vocabulary_digest {
        return Err(Error::integrity(path, "vocabulary digest mismatch"));
    }
    let blob = &bytes[8 + hlen..];
    if blob.len() != header.parameter_count * 4 {
        return Err(Error::integrity(
            path,
            format!(
                "parameter blob has {} bytes, header declares {} parameters",
                blob.len(),
                header.parameter_count
            ),
        ));
    }
    if io::sha256_hex(blob) != header.parameters_sha256 {
        return Err(Error::integrity(path, "parameter checksum mismatch"));
    }
    let mut model = AcousticModel::zeros(
        header.input_dim,
        header.context_window,
        &header.hidden_dims,
        header.vocabulary,
        header.seed,
    )?;
    if model.output_dim() != header.output_dim || model.parameters().len() != header.parameter_count {
        return Err(fmt("layer shapes do not match the declared parameter count".into()));
    }
    model.set_parameters(io::f32s_from_le(blob).into_iter().map(f64::from).collect())?;
    Ok(model)
}
