//! Run summaries and the two result tables: test WER per model and LM
//! condition, and pseudo-label quality per stage.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    read_json, stage_dir, test_decode_file, write_json, BaselineReport, PipelineConfig, StageReport,
    StopReason, TuningRecord, DATA_STEP, REPORT_FILE, STAGE_TABLE_FILE, SUMMARY_FILE, WER_TABLE_FILE,
};
use crate::corpus::load_manifest;
use crate::decoder::load_labels;
use crate::error::{Error, Result};
use crate::metrics::{format_report, ReportRow, WerBreakdown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub test_set: String,
    pub tuning: TuningRecord,
    pub stages: Vec<StageReport>,
    pub baselines: Vec<BaselineReport>,
    /// Absent while the run is incomplete.
    pub stop_reason: Option<StopReason>,
}

impl RunSummary {
    pub(crate) fn partial(config: &PipelineConfig, tuning: TuningRecord, stages: Vec<StageReport>) -> Self {
        RunSummary {
            run_id: config.run_id.clone(),
            seed: config.seed,
            test_set: format!("{}-test", config.target.name),
            tuning,
            stages,
            baselines: Vec::new(),
            stop_reason: None,
        }
    }

    pub(crate) fn complete(
        config: &PipelineConfig,
        tuning: TuningRecord,
        stages: Vec<StageReport>,
        baselines: Vec<BaselineReport>,
        stop_reason: StopReason,
    ) -> Self {
        RunSummary {
            baselines,
            stop_reason: Some(stop_reason),
            ..RunSummary::partial(config, tuning, stages)
        }
    }

    pub fn is_complete(&self) -> bool {
        self.stop_reason.is_some()
    }

    /// Students in stage order (stage 0 excluded).
    pub fn students(&self) -> &[StageReport] {
        self.stages.get(1..).unwrap_or(&[])
    }

    pub fn baseline(&self, model: &str) -> Option<&BaselineReport> {
        self.baselines.iter().find(|b| b.model == model)
    }

    /// Writes `summary.json` and both tables into the run directory.
    pub fn write(&self, run_dir: &Path) -> Result<()> {
        write_json(&run_dir.join(SUMMARY_FILE), self)?;
        crate::io::write_atomic(&run_dir.join(WER_TABLE_FILE), render_wer_table(self).as_bytes())?;
        crate::io::write_atomic(&run_dir.join(STAGE_TABLE_FILE), render_stage_table(self).as_bytes())
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        read_json(&run_dir.join(SUMMARY_FILE))
    }
}

fn rows(summary: &RunSummary) -> Vec<(String, WerBreakdown, WerBreakdown)> {
    let mut out = Vec::new();
    if let Some(s0) = summary.stages.first() {
        for t in &s0.teachers {
            out.push((t.model.clone(), t.test_no_lm, t.test_with_lm));
        }
        out.push(("top1".to_string(), s0.test_wer_no_lm, s0.test_wer_with_lm));
    }
    for s in summary.students() {
        out.push((s.model.clone(), s.test_wer_no_lm, s.test_wer_with_lm));
    }
    for b in &summary.baselines {
        out.push((b.model.clone(), b.test_wer_no_lm, b.test_wer_with_lm));
    }
    out
}

/// Test WER of every model, without and with the LM.
pub fn render_wer_table(summary: &RunSummary) -> String {
    let mut table = Vec::new();
    for (model, no_lm, with_lm) in rows(summary) {
        for (lm, breakdown) in [(false, no_lm), (true, with_lm)] {
            table.push(ReportRow {
                model: model.clone(),
                test_set: summary.test_set.clone(),
                with_lm: lm,
                breakdown,
            });
        }
    }
    format_report(&table)
}

fn pct(b: Option<&WerBreakdown>) -> String {
    b.map_or_else(|| "-".to_string(), |b| format!("{:.2}", 100.0 * b.wer))
}

/// Per stage: the WER of the pseudo-labels it produced on the target
/// training set, and its model's test WER.
pub fn render_stage_table(summary: &RunSummary) -> String {
    let mut out = String::from(
        "stage\tmodel\tpseudo_no_lm_pct\tpseudo_lm_pct\ttest_no_lm_pct\ttest_lm_pct\tskipped\tcarried\n",
    );
    for s in &summary.stages {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.stage,
            s.model,
            pct(s.train_pseudo_wer_no_lm.as_ref()),
            pct(s.train_pseudo_wer_with_lm.as_ref()),
            pct(Some(&s.test_wer_no_lm)),
            pct(Some(&s.test_wer_with_lm)),
            s.skipped_utterances,
            s.carried_forward
        );
    }
    out
}

/// Recomputes every test WER in a completed run from the persisted
/// per-utterance decode records and the test manifest, and checks it against
/// the stored reports. Returns the summary on success.
pub fn audit_run(run_dir: &Path) -> Result<RunSummary> {
    let summary = RunSummary::load(run_dir)?;
    let test = load_manifest(&run_dir.join(DATA_STEP).join(super::manifest_file(&summary.test_set)))?;
    let check = |step: &str, model: &str, expected: &[WerBreakdown; 2]| -> Result<()> {
        for (with_lm, want) in [(false, &expected[0]), (true, &expected[1])] {
            let path = run_dir.join(step).join(test_decode_file(model, with_lm));
            let records = load_labels(&path, test.vocabulary())?;
            let got = super::label_wer(&records, &test)?;
            if got != *want {
                return Err(Error::integrity(
                    &path,
                    format!(
                        "recomputed WER {:.6} (S={} I={} D={} N={}) differs from the reported {:.6} (S={} I={} D={} N={})",
                        got.wer,
                        got.substitutions,
                        got.insertions,
                        got.deletions,
                        got.reference_words,
                        want.wer,
                        want.substitutions,
                        want.insertions,
                        want.deletions,
                        want.reference_words
                    ),
                ));
            }
        }
        Ok(())
    };
    for s in &summary.stages {
        let step = stage_dir(s.stage);
        let stored: StageReport = read_json(&run_dir.join(&step).join(REPORT_FILE))?;
        if stored != *s {
            return Err(Error::integrity(run_dir.join(&step).join(REPORT_FILE), "stage report differs from the summary"));
        }
        if s.stage == 0 {
            for (i, t) in s.teachers.iter().enumerate() {
                check(&step, &format!("T{}", i + 1), &[t.test_no_lm, t.test_with_lm])?;
            }
            check(&step, "top1", &[s.test_wer_no_lm, s.test_wer_with_lm])?;
        } else {
            check(&step, &s.model, &[s.test_wer_no_lm, s.test_wer_with_lm])?;
        }
    }
    for b in &summary.baselines {
        check(&format!("baseline_{}", b.model), &b.model, &[b.test_wer_no_lm, b.test_wer_with_lm])?;
    }
    Ok(summary)
}

/// The qualitative outcomes a run is expected to show, computed from its
/// summary. `None` when the run did not produce the stages needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trends {
    /// S1's with-LM test WER is below every teacher's.
    pub s1_beats_best_teacher: Option<bool>,
    /// S2's with-LM test WER is at most S1's.
    pub s2_not_worse: Option<bool>,
    /// With-LM pseudo-label WER does not rise over stages 0, 1 and 2.
    pub pseudo_labels_non_increasing: Option<bool>,
    /// Each student's test-WER gain over its predecessor (the best teacher
    /// for S1) is strictly smaller than the previous gain.
    pub gains_shrink: Option<bool>,
    /// Stage-0 pseudo-labels are no worse with the LM than without.
    pub lm_helps_stage0_labels: Option<bool>,
    /// The KL baseline's with-LM test WER is at least S1's.
    pub kl_not_better_than_s1: Option<bool>,
    /// Oracle-selected labels are no worse than Top-1 labels.
    pub oracle_labels_dominate: Option<bool>,
}

impl RunSummary {
    pub fn trends(&self) -> Trends {
        let test = |k: usize| self.stages.get(k).map(|s| s.test_wer_with_lm.wer);
        let pseudo = |k: usize| {
            self.stages
                .get(k)
                .and_then(|s| s.train_pseudo_wer_with_lm.map(|b| b.wer))
        };
        let s0 = self.stages.first();
        let best_teacher = s0.map(super::best_teacher_wer);
        let mut prev = best_teacher;
        let mut gains = Vec::new();
        for s in self.students() {
            gains.push(prev.unwrap_or(f64::NAN) - s.test_wer_with_lm.wer);
            prev = Some(s.test_wer_with_lm.wer);
        }
        let s1 = test(1);
        Trends {
            s1_beats_best_teacher: s1.zip(best_teacher).map(|(s, t)| s < t),
            s2_not_worse: s1.zip(test(2)).map(|(a, b)| b <= a),
            pseudo_labels_non_increasing: match (pseudo(0), pseudo(1), pseudo(2)) {
                (Some(a), Some(b), Some(c)) => Some(b <= a && c <= b),
                _ => None,
            },
            gains_shrink: (gains.len() >= 2).then(|| gains.windows(2).all(|w| w[1] < w[0])),
            lm_helps_stage0_labels: s0.and_then(|s| {
                s.train_pseudo_wer_with_lm
                    .zip(s.train_pseudo_wer_no_lm)
                    .map(|(w, n)| w.wer <= n.wer)
            }),
            kl_not_better_than_s1: self
                .baseline(super::KL_BASELINE)
                .zip(s1)
                .map(|(b, s)| b.test_wer_with_lm.wer >= s),
            oracle_labels_dominate: self
                .baseline(super::ORACLE_BASELINE)
                .and_then(|b| b.train_pseudo_wer_with_lm)
                .zip(pseudo(0))
                .map(|(o, t)| o.wer <= t),
        }
    }
}
