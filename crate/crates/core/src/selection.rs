//! Per-utterance teacher selection: the unsupervised Top-1 rule (pick the
//! teacher whose frame-wise maximum posteriors are highest on average) and
//! two baselines, posterior averaging and oracle selection by WER.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::ctc::{PosteriorGrid, Transcript};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherScore {
    pub teacher_index: usize,
    /// Mean over frames of the largest posterior, in `[0, 1]`.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub utterance_id: String,
    pub selected_teacher: usize,
    pub all_scores: Vec<TeacherScore>,
}

/// Which symbols take part in the per-frame maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Every symbol, blank included.
    #[default]
    AllSymbols,
    /// Every symbol except the given index (normally the blank).
    Excluding(usize),
}

/// `(1/T) * sum_t max_z p(z | t)` over all symbols.
pub fn teacher_score(grid: &PosteriorGrid) -> f64 {
    teacher_score_with(grid, ScoreMode::AllSymbols)
}

pub fn teacher_score_with(grid: &PosteriorGrid, mode: ScoreMode) -> f64 {
    let sum: f64 = grid
        .rows()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .filter(|&(z, _)| mode != ScoreMode::Excluding(z))
                .map(|(_, &lp)| lp)
                .fold(f64::NEG_INFINITY, f64::max);
            best.exp()
        })
        .sum();
    sum / grid.num_frames() as f64
}

fn check_compatible(grids: &[&PosteriorGrid]) -> Result<()> {
    let first = grids
        .first()
        .ok_or_else(|| Error::param("selection needs at least one teacher grid"))?;
    for (n, g) in grids.iter().enumerate().skip(1) {
        if g.utterance_id() != first.utterance_id() {
            return Err(Error::param(format!(
                "teacher {n} grid is for {:?}, teacher 0 for {:?}",
                g.utterance_id(),
                first.utterance_id()
            )));
        }
        if g.num_frames() != first.num_frames() || g.num_symbols() != first.num_symbols() {
            return Err(Error::param(format!(
                "teacher {n} grid for {:?} is {}x{}, teacher 0 is {}x{}",
                g.utterance_id(),
                g.num_frames(),
                g.num_symbols(),
                first.num_frames(),
                first.num_symbols()
            )));
        }
    }
    Ok(())
}

fn scores(grids: &[&PosteriorGrid], mode: ScoreMode) -> Vec<TeacherScore> {
    grids
        .iter()
        .enumerate()
        .map(|(teacher_index, g)| TeacherScore {
            teacher_index,
            q: teacher_score_with(g, mode),
        })
        .collect()
}

/// Picks the teacher with the highest score; ties go to the lowest index.
pub fn select_top1(grids: &[&PosteriorGrid]) -> Result<SelectionResult> {
    select_top1_with(grids, ScoreMode::AllSymbols)
}

pub fn select_top1_with(grids: &[&PosteriorGrid], mode: ScoreMode) -> Result<SelectionResult> {
    check_compatible(grids)?;
    let all_scores = scores(grids, mode);
    let selected_teacher = all_scores
        .iter()
        .fold(0, |b, s| if s.q > all_scores[b].q { s.teacher_index } else { b });
    Ok(SelectionResult {
        utterance_id: grids[0].utterance_id().to_string(),
        selected_teacher,
        all_scores,
    })
}

/// Cell-wise mean of the teachers' probabilities, returned as log probs.
pub fn average_posteriors(grids: &[&PosteriorGrid]) -> Result<PosteriorGrid> {
    check_compatible(grids)?;
    let first = grids[0];
    let n = grids.len() as f64;
    let log_probs: Vec<f64> = (0..first.as_slice().len())
        .map(|i| {
            let mean = grids.iter().map(|g| g.as_slice()[i].exp()).sum::<f64>() / n;
            mean.ln()
        })
        .collect();
    PosteriorGrid::from_log_probs(
        first.utterance_id(),
        first.num_frames(),
        first.num_symbols(),
        log_probs,
    )
}

/// Picks the teacher whose decoded grid has the lowest WER against the
/// reference; ties go to the higher score, then the lower index.
pub fn oracle_select<F>(
    grids: &[&PosteriorGrid],
    reference: &Transcript,
    vocab: &Vocabulary,
    mut decode: F,
) -> Result<SelectionResult>
where
    F: FnMut(&PosteriorGrid) -> Result<Transcript>,
{
    check_compatible(grids)?;
    let all_scores = scores(grids, ScoreMode::AllSymbols);
    let mut best: Option<(f64, usize)> = None;
    for (n, g) in grids.iter().enumerate() {
        let w = metrics::wer(&decode(g)?, reference, vocab).wer;
        let better = match best {
            None => true,
            Some((bw, b)) => w < bw || (w == bw && all_scores[n].q > all_scores[b].q),
        };
        if better {
            best = Some((w, n));
        }
    }
    Ok(SelectionResult {
        utterance_id: grids[0].utterance_id().to_string(),
        selected_teacher: best.expect("at least one grid").1,
        all_scores,
    })
}

/// One line of the selection audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub id: String,
    pub q: Vec<f64>,
    pub selected: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<usize>,
}

impl AuditRecord {
    pub fn new(top1: &SelectionResult, oracle: Option<&SelectionResult>) -> Self {
        AuditRecord {
            id: top1.utterance_id.clone(),
            q: top1.all_scores.iter().map(|s| s.q).collect(),
            selected: top1.selected_teacher,
            oracle: oracle.map(|o| o.selected_teacher),
        }
    }
}

/// Fraction of audited utterances where Top-1 agrees with the oracle, over
/// those with an oracle entry.
pub fn agreement(records: &[AuditRecord]) -> Option<f64> {
    let with_oracle: Vec<_> = records.iter().filter_map(|r| r.oracle.map(|o| o == r.selected)).collect();
    if with_oracle.is_empty() {
        return None;
    }
    Some(with_oracle.iter().filter(|&&a| a).count() as f64 / with_oracle.len() as f64)
}

pub fn save_audit(records: &[AuditRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("audit record serializes"));
        out.push('\n');
    }
    io::write_atomic(path, out.as_bytes())
}

pub fn load_audit(path: &Path) -> Result<Vec<AuditRecord>> {
    let text = io::read_string(path)?;
    let origin = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::format(&origin, format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}
