use std::path::Path;

use super::{log_sum_exp, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::io;

/// Per-frame log posterior distributions for one utterance, `T x V`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    utterance_id: String,
    frames: usize,
    symbols: usize,
    log_probs: Vec<f64>,
}

impl PosteriorGrid {
    /// Wraps already-normalized log probabilities. Every row must satisfy
    /// `|logsumexp(row)| <= 1e-6` and no entry may be NaN or `+inf`.
    pub fn from_log_probs(
        utterance_id: impl Into<String>,
        frames: usize,
        symbols: usize,
        log_probs: Vec<f64>,
    ) -> Result<Self> {
        let grid = PosteriorGrid {
            utterance_id: utterance_id.into(),
            frames,
            symbols,
            log_probs,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Applies a row-wise log-softmax to unnormalized scores.
    pub fn from_logits(
        utterance_id: impl Into<String>,
        frames: usize,
        symbols: usize,
        mut logits: Vec<f64>,
    ) -> Result<Self> {
        if symbols == 0 || logits.len() != frames * symbols {
            return Err(Error::param(format!(
                "logit buffer has {} values, expected {frames}x{symbols}",
                logits.len()
            )));
        }
        for row in logits.chunks_exact_mut(symbols) {
            log_softmax_in_place(row);
        }
        PosteriorGrid::from_log_probs(utterance_id, frames, symbols, logits)
    }

    /// Builds a grid from rows of probabilities (each row must sum to 1).
    pub fn from_probs(
        utterance_id: impl Into<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let symbols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != symbols) {
            return Err(Error::param("probability rows have unequal lengths"));
        }
        let log_probs = rows.iter().flatten().map(|p| p.ln()).collect();
        PosteriorGrid::from_log_probs(utterance_id, rows.len(), symbols, log_probs)
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.symbols == 0 {
            return Err(Error::param("posterior grid must have at least one frame and one symbol"));
        }
        if self.log_probs.len() != self.frames * self.symbols {
            return Err(Error::param(format!(
                "posterior buffer has {} values, expected {}x{}",
                self.log_probs.len(),
                self.frames,
                self.symbols
            )));
        }
        for (t, row) in self.log_probs.chunks_exact(self.symbols).enumerate() {
            if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(Error::param(format!(
                    "grid {} row {t} contains NaN or +inf",
                    self.utterance_id
                )));
            }
            let z = log_sum_exp(row);
            if !(z.abs() <= NORMALIZATION_TOL) {
                return Err(Error::param(format!(
                    "grid {} row {t} is not normalized (logsumexp = {z})",
                    self.utterance_id
                )));
            }
        }
        Ok(())
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.log_probs[t * self.symbols..(t + 1) * self.symbols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.log_probs.chunks_exact(self.symbols)
    }

    pub fn log_prob(&self, t: usize, v: usize) -> f64 {
        self.log_probs[t * self.symbols + v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn with_id(mut self, utterance_id: impl Into<String>) -> Self {
        self.utterance_id = utterance_id.into();
        self
    }

    /// The grid as it reads back from the 32-bit interchange format.
    pub fn to_f32_precision(&self) -> PosteriorGrid {
        PosteriorGrid {
            utterance_id: self.utterance_id.clone(),
            frames: self.frames,
            symbols: self.symbols,
            log_probs: self.log_probs.iter().map(|&x| x as f32 as f64).collect(),
        }
    }

    /// Per-frame argmax, ties toward the lowest symbol index.
    pub fn argmax_path(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                let mut best = 0;
                for (v, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = v;
                    }
                }
                best
            })
            .collect()
    }
}

pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let z = log_sum_exp(row);
    for x in row.iter_mut() {
        *x -= z;
    }
}

const GRID_MAGIC: &[u8; 4] = b"SWPG";
const GRID_VERSION: u32 = 1;

/// Writes grids as `magic, version, count` followed by one record per grid:
/// `id_len: u32, id bytes, T: u32, V: u32, T*V f32 log-probs` (all
/// little-endian, row-major).
pub fn save_grids(grids: &[PosteriorGrid], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.extend_from_slice(&(grids.len() as u32).to_le_bytes());
    for g in grids {
        let id = g.utterance_id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(g.frames as u32).to_le_bytes());
        out.extend_from_slice(&(g.symbols as u32).to_le_bytes());
        io::push_f32s(&mut out, g.log_probs.iter().map(|&x| x as f32));
    }
    io::write_atomic(path, &out)
}

pub fn load_grids(path: &Path) -> Result<Vec<PosteriorGrid>> {
    let origin = path.display().to_string();
    let bytes = io::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        origin: &origin,
    };
    if cur.take(4, "header")? != GRID_MAGIC {
        return Err(Error::format(&origin, "header", "not a posterior grid file"));
    }
    let version = cur.u32("header")?;
    if version != GRID_VERSION {
        return Err(Error::format(&origin, "header", format!("unsupported version {version}")));
    }
    let count = cur.u32("header")? as usize;
    let mut grids = Vec::with_capacity(count);
    for i in 0..count {
        let rec = format!("record {i}");
        let id_len = cur.u32(&rec)? as usize;
        let id = String::from_utf8(cur.take(id_len, &rec)?.to_vec())
            .map_err(|_| Error::format(&origin, &rec, "utterance id is not UTF-8"))?;
        let rec = format!("record {i} (utterance {id})");
        let t = cur.u32(&rec)? as usize;
        let v = cur.u32(&rec)? as usize;
        let data = io::f32s_from_le(cur.take(t * v * 4, &rec)?);
        let grid = PosteriorGrid::from_log_probs(id, t, v, data.into_iter().map(f64::from).collect())
            .map_err(|e| Error::format(&origin, &rec, e.to_string()))?;
        grids.push(grid);
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(&origin, "end of file", "trailing bytes"));
    }
    Ok(grids)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, rec: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.origin, rec, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, rec: &str) -> Result<u32> {
        let b = self.take(4, rec)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
