//! Word error rate via Levenshtein alignment, per utterance and pooled over a
//! corpus, plus the delimited report table used for result summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::ctc::Transcript;
use crate::error::{Error, Result};

/// Error counts of one optimal alignment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
    pub wer: f64,
    /// Set when the reference has no words, so the rate was computed against
    /// a denominator of one.
    pub empty_reference: bool,
}

impl WerBreakdown {
    fn from_counts(s: usize, i: usize, d: usize, n: usize) -> Self {
        WerBreakdown {
            substitutions: s,
            insertions: i,
            deletions: d,
            reference_words: n,
            wer: (s + i + d) as f64 / n.max(1) as f64,
            empty_reference: n == 0,
        }
    }

    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Aligns two word sequences with unit edit costs. Among minimal-cost
/// alignments the one with the most substitutions wins, then the one with
/// fewer insertions.
pub fn word_errors<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> WerBreakdown {
    let (n, m) = (reference.len(), hyp.len());
    // cost[i][j] = (edits, -substitutions, insertions) for ref[..i] vs hyp[..j];
    // tuple order encodes the tie-break.
    let w = m + 1;
    let mut cost = vec![(0usize, 0isize, 0usize); (n + 1) * w];
    for j in 1..=m {
        cost[j] = (j, 0, j);
    }
    for i in 1..=n {
        cost[i * w] = (i, 0, 0);
        for j in 1..=m {
            let same = reference[i - 1].as_ref() == hyp[j - 1].as_ref();
            let diag = cost[(i - 1) * w + j - 1];
            let diag = if same {
                diag
            } else {
                (diag.0 + 1, diag.1 - 1, diag.2)
            };
            let up = cost[(i - 1) * w + j];
            let del = (up.0 + 1, up.1, up.2);
            let left = cost[i * w + j - 1];
            let ins = (left.0 + 1, left.1, left.2 + 1);
            cost[i * w + j] = diag.min(del).min(ins);
        }
    }
    let (edits, neg_sub, ins) = cost[n * w + m];
    let s = (-neg_sub) as usize;
    let d = edits - s - ins;
    WerBreakdown::from_counts(s, ins, d, n)
}

/// WER of `hyp` against `reference`, splitting both on the word delimiter.
pub fn wer(hyp: &Transcript, reference: &Transcript, vocab: &Vocabulary) -> WerBreakdown {
    word_errors(&hyp.words(vocab), &reference.words(vocab))
}

/// Sums counts over utterances before dividing.
pub fn pool(parts: &[WerBreakdown]) -> Result<WerBreakdown> {
    if parts.is_empty() {
        return Err(Error::param("corpus WER needs at least one utterance"));
    }
    let (mut s, mut i, mut d, mut n) = (0, 0, 0, 0);
    for p in parts {
        s += p.substitutions;
        i += p.insertions;
        d += p.deletions;
        n += p.reference_words;
    }
    Ok(WerBreakdown::from_counts(s, i, d, n))
}

/// Pooled WER over `(hypothesis, reference)` pairs.
pub fn corpus_wer(pairs: &[(&Transcript, &Transcript)], vocab: &Vocabulary) -> Result<WerBreakdown> {
    let parts: Vec<WerBreakdown> = pairs.iter().map(|(h, r)| wer(h, r, vocab)).collect();
    pool(&parts)
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub test_set: String,
    pub with_lm: bool,
    pub breakdown: WerBreakdown,
}

pub const REPORT_HEADER: &str = "model\ttest_set\tlm\twer_pct\tS\tI\tD\tN";

/// Renders rows as a tab-delimited table with a header line.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let b = &r.breakdown;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.2}\t{}\t{}\t{}\t{}",
            r.model,
            r.test_set,
            if r.with_lm { "yes" } else { "no" },
            100.0 * b.wer,
            b.substitutions,
            b.insertions,
            b.deletions,
            b.reference_words
        );
    }
    out
}
