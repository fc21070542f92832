//! The full method, end to end: teachers on labelled source domains, an
//! n-gram LM on source text, Top-1 ensemble pseudo-labels on the unlabelled
//! target, then successive students each relabelling the target for the next.
//!
//! The building blocks are public so each step can also be driven on its own
//! (the command-line tool does exactly that); [`run_multistage`] chains them,
//! persisting every artifact under `runs/<run_id>/` and resuming from
//! whatever a previous invocation completed.

mod config;
mod report;
mod store;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    DataConfig, DecodeSettings, DomainRecipe, LmConfig, ModelConfig, PipelineConfig, TrainSettings,
};
pub use report::{audit_run, render_stage_table, render_wer_table, RunSummary, Trends};

use crate::acoustic::{
    kl_distill_train, load_checkpoint, save_checkpoint, train, AcousticModel, LabelMode,
    TrainOutcome,
};
use crate::corpus::{generate_corpus, load_manifest, save_manifest, Corpus, Vocabulary};
use crate::ctc::{load_grids, save_grids, PosteriorGrid, Transcript};
use crate::decoder::{
    beam_search_decode, load_labels, save_labels, tune_hyperparams, DecodeConfig, Decoded,
    Provenance, PseudoLabel, Tuning,
};
use crate::error::{Error, Result};
use crate::io::{self, mix_seed, tag};
use crate::lm::{load_arpa, save_arpa, train_ngram, NGramModel};
use crate::metrics::{corpus_wer, WerBreakdown};
use crate::selection::{oracle_select, save_audit, select_top1, agreement, AuditRecord, SelectionResult};
use store::Store;

/// Which model a seed is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Teacher(usize),
    /// The student trained at stage `k >= 1`. The baselines share the
    /// stage-1 student's seed so they differ from it only in their targets.
    Student(usize),
}

/// Seed for a model's initialization and minibatch order.
pub fn role_seed(run_seed: u64, role: Role) -> u64 {
    match role {
        Role::Teacher(i) => mix_seed(&[run_seed, tag("teacher"), i as u64]),
        Role::Student(k) => mix_seed(&[run_seed, tag("student"), k as u64]),
    }
}

/// Every corpus of a run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub vocab: Vocabulary,
    pub source_train: Vec<Corpus>,
    pub source_valid: Vec<Corpus>,
    /// The target training set. Its references are only read for
    /// diagnostics (pseudo-label WER, oracle selection).
    pub target_train: Corpus,
    pub target_test: Corpus,
}

impl RunData {
    pub fn corpora(&self) -> impl Iterator<Item = &Corpus> {
        self.source_train
            .iter()
            .chain(&self.source_valid)
            .chain([&self.target_train, &self.target_test])
    }
}

fn corpus_seed(run_seed: u64, name: &str) -> u64 {
    mix_seed(&[run_seed, tag("corpus"), tag(name)])
}

/// Generates the labelled source train/validation sets for every teacher
/// domain and the target train/test sets.
pub fn generate_data(config: &PipelineConfig) -> Result<RunData> {
    config.validate()?;
    let vocab = config.vocabulary()?;
    let d = &config.data;
    let make = |recipe: &DomainRecipe, split: &str, n: usize| -> Result<Corpus> {
        let name = format!("{}-{split}", recipe.name);
        let mut spec = recipe.to_spec(
            &vocab,
            d.feature_dim,
            d.lexicon_size,
            d.lexicon_seed,
            config.seed,
            corpus_seed(config.seed, &name),
        );
        spec.name = name;
        generate_corpus(&spec, &vocab, n, d.words_per_utterance)
    };
    let mut source_train = Vec::new();
    let mut source_valid = Vec::new();
    for t in &config.teachers {
        source_train.push(make(t, "train", d.source_train)?);
        source_valid.push(make(t, "valid", d.source_valid)?);
    }
    Ok(RunData {
        source_train,
        source_valid,
        target_train: make(&config.target, "train", d.target_train)?,
        target_test: make(&config.target, "test", d.target_test)?,
        vocab,
    })
}

fn references_of(corpus: &Corpus) -> Result<Vec<Transcript>> {
    corpus
        .references()
        .map(|r| r.into_iter().cloned().collect())
        .ok_or_else(|| Error::param(format!("corpus {} is not labelled", corpus.name())))
}

fn stage_context(what: &str, e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::Parameter(format!("{what}: {m}")),
        other => other,
    }
}

/// Trains teacher `index` on its own source corpus, ground-truth labels only.
pub fn train_teacher(config: &PipelineConfig, index: usize, corpus: &Corpus) -> Result<TrainOutcome> {
    let seed = role_seed(config.seed, Role::Teacher(index));
    let arch = &config.teacher_model;
    let model = AcousticModel::new(
        config.data.feature_dim,
        arch.context_window,
        &arch.hidden_dims,
        corpus.vocabulary().clone(),
        seed,
    )?;
    let labels = references_of(corpus)?;
    train(&model, corpus, &labels, &config.teacher_train.with(seed, LabelMode::GroundTruth))
        .map_err(|e| stage_context(&format!("teacher {index}"), e))
}

pub fn train_teachers(config: &PipelineConfig, data: &RunData) -> Result<Vec<AcousticModel>> {
    data.source_train
        .iter()
        .enumerate()
        .map(|(i, c)| train_teacher(config, i, c).map(|o| o.model))
        .collect()
}

/// Word sequences of every source training transcript; the LM never sees
/// target text.
pub fn lm_training_text(sources: &[Corpus]) -> Result<Vec<Vec<String>>> {
    let mut text = Vec::new();
    for c in sources {
        for r in references_of(c)? {
            text.push(r.words(c.vocabulary()));
        }
    }
    Ok(text)
}

pub fn train_lm(config: &PipelineConfig, sources: &[Corpus]) -> Result<NGramModel> {
    train_ngram(&lm_training_text(sources)?, config.lm.order, config.lm.discount)
}

/// `(alpha, beta) = (0, 0)`: the plain CTC prefix search.
pub fn without_lm(config: &DecodeConfig) -> DecodeConfig {
    DecodeConfig {
        alpha: 0.0,
        beta: 0.0,
        ..*config
    }
}

/// Tunes `(alpha, beta)` on every teacher's output for every source
/// validation set: decoding in-domain and cross-domain posteriors alike, as
/// the target will be.
pub fn tune_decoder(
    config: &PipelineConfig,
    teachers: &[AcousticModel],
    valid: &[Corpus],
    lm: &NGramModel,
) -> Result<Tuning> {
    let mut grids = Vec::new();
    let mut refs = Vec::new();
    for t in teachers {
        for c in valid {
            grids.extend(t.infer_corpus(c)?);
            refs.extend(references_of(c)?);
        }
    }
    let vocab = teachers
        .first()
        .ok_or_else(|| Error::param("no teachers to tune with"))?
        .vocabulary();
    tune_hyperparams(
        &grids,
        &refs,
        lm,
        &config.decode.alpha_grid,
        &config.decode.beta_grid,
        &config.decode.base(),
        vocab,
    )
}

/// Pseudo-labels for one stage, in corpus order.
#[derive(Debug, Clone)]
pub struct StageLabels {
    pub labels: Vec<PseudoLabel>,
    /// Per-utterance Top-1 selection when several models labelled.
    pub selections: Option<Vec<SelectionResult>>,
    /// Utterances whose decoding failed; they have no label.
    pub skipped: Vec<String>,
}

/// Labels a target corpus given each model's posterior grids (one vector
/// per model, aligned with the corpus). At stage 0 (the teachers, however
/// many) the Top-1 grid is decoded per utterance and provenance is the
/// teacher index; at a later stage the single student's grid is decoded and
/// provenance is `Stage(stage)`.
pub fn labels_from_grids(
    grid_sets: &[Vec<PosteriorGrid>],
    lm: Option<&NGramModel>,
    decode: &DecodeConfig,
    vocab: &Vocabulary,
    stage: usize,
) -> Result<StageLabels> {
    let n_utts = grid_sets
        .first()
        .ok_or_else(|| Error::param("at least one model is required"))?
        .len();
    if grid_sets.iter().any(|g| g.len() != n_utts) {
        return Err(Error::param("every model must provide one grid per utterance"));
    }
    let ensemble = stage == 0;
    if !ensemble && grid_sets.len() != 1 {
        return Err(Error::param("a student stage is labelled by exactly one model"));
    }
    let selections: Option<Vec<SelectionResult>> = if ensemble {
        Some(
            (0..n_utts)
                .map(|u| select_top1(&grid_sets.iter().map(|g| &g[u]).collect::<Vec<_>>()))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let chosen: Vec<(&PosteriorGrid, Provenance)> = (0..n_utts)
        .map(|u| match &selections {
            Some(s) => {
                let i = s[u].selected_teacher;
                (&grid_sets[i][u], Provenance::Teacher(i))
            }
            None => (&grid_sets[0][u], Provenance::Stage(stage)),
        })
        .collect();
    let decoded = decode_each(chosen.iter().map(|(g, _)| *g), lm, decode, vocab);
    let mut labels = Vec::with_capacity(n_utts);
    let mut skipped = Vec::new();
    for ((grid, prov), d) in chosen.iter().zip(decoded) {
        match d {
            Ok(d) => labels.push(PseudoLabel::from_decoded(grid.utterance_id(), &d).with_provenance(*prov)),
            Err(e) => {
                log::warn!("skipping {}: decoding failed: {e}", grid.utterance_id());
                skipped.push(grid.utterance_id().to_string());
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::param("decoding failed for every utterance"));
    }
    Ok(StageLabels {
        labels,
        selections,
        skipped,
    })
}

fn decode_each<'a>(
    grids: impl Iterator<Item = &'a PosteriorGrid>,
    lm: Option<&NGramModel>,
    decode: &DecodeConfig,
    vocab: &Vocabulary,
) -> Vec<Result<Decoded>> {
    use rayon::prelude::*;
    let grids: Vec<&PosteriorGrid> = grids.collect();
    grids
        .par_iter()
        .map(|g| beam_search_decode(g, lm, decode, vocab))
        .collect()
}

/// Runs every model over the target and labels it (see [`labels_from_grids`]).
pub fn generate_stage_labels(
    models: &[&AcousticModel],
    target: &Corpus,
    lm: Option<&NGramModel>,
    decode: &DecodeConfig,
    stage: usize,
) -> Result<StageLabels> {
    let grid_sets: Vec<Vec<PosteriorGrid>> =
        models.iter().map(|m| m.infer_corpus(target)).collect::<Result<_>>()?;
    labels_from_grids(&grid_sets, lm, decode, target.vocabulary(), stage)
}

/// Oracle choice per utterance: the grid whose decode has the lowest WER
/// against the reference.
pub fn oracle_labels(
    grid_sets: &[Vec<PosteriorGrid>],
    target: &Corpus,
    lm: Option<&NGramModel>,
    decode: &DecodeConfig,
) -> Result<(Vec<PseudoLabel>, Vec<SelectionResult>)> {
    let refs = references_of(target)?;
    let vocab = target.vocabulary();
    let mut labels = Vec::with_capacity(refs.len());
    let mut selections = Vec::with_capacity(refs.len());
    for (u, reference) in refs.iter().enumerate() {
        let grids: Vec<&PosteriorGrid> = grid_sets.iter().map(|g| &g[u]).collect();
        let sel = oracle_select(&grids, reference, vocab, |g| {
            beam_search_decode(g, lm, decode, vocab).map(|d| d.transcript)
        })?;
        let i = sel.selected_teacher;
        let d = beam_search_decode(grids[i], lm, decode, vocab)?;
        labels.push(PseudoLabel::from_decoded(grids[i].utterance_id(), &d).with_provenance(Provenance::Teacher(i)));
        selections.push(sel);
    }
    Ok((labels, selections))
}

/// Pooled WER of labels against the corpus references, matched by id.
pub fn label_wer(labels: &[PseudoLabel], corpus: &Corpus) -> Result<WerBreakdown> {
    let by_id: std::collections::HashMap<&str, &Transcript> = corpus
        .utterances()
        .iter()
        .filter_map(|u| u.reference.as_ref().map(|r| (u.id.as_str(), r)))
        .collect();
    let pairs = labels
        .iter()
        .map(|l| {
            by_id
                .get(l.utterance_id.as_str())
                .map(|r| (&l.transcript, *r))
                .ok_or_else(|| Error::param(format!("no reference for {}", l.utterance_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    corpus_wer(&pairs, corpus.vocabulary())
}

/// The corpus restricted to labelled utterances, with the label transcripts
/// in matching order.
fn training_pairs(target: &Corpus, labels: &[PseudoLabel]) -> Result<(Corpus, Vec<Transcript>)> {
    let by_id: std::collections::HashMap<&str, &PseudoLabel> =
        labels.iter().map(|l| (l.utterance_id.as_str(), l)).collect();
    let mut utts = Vec::new();
    let mut transcripts = Vec::new();
    for u in target.utterances() {
        if let Some(l) = by_id.get(u.id.as_str()) {
            utts.push(crate::corpus::Utterance {
                reference: None,
                ..u.clone()
            });
            transcripts.push(l.transcript.clone());
        }
    }
    Ok((
        Corpus::new(target.name(), target.vocabulary().clone(), utts, false)?,
        transcripts,
    ))
}

fn fresh_student(config: &PipelineConfig, vocab: &Vocabulary, stage: usize) -> Result<(AcousticModel, u64)> {
    let seed = role_seed(config.seed, Role::Student(stage));
    let arch = &config.student_model;
    let model = AcousticModel::new(
        config.data.feature_dim,
        arch.context_window,
        &arch.hidden_dims,
        vocab.clone(),
        seed,
    )?;
    Ok((model, seed))
}

/// Trains the stage-`stage` student from a fresh seeded initialization on
/// hard pseudo-labels.
pub fn train_student(
    config: &PipelineConfig,
    stage: usize,
    target: &Corpus,
    labels: &[PseudoLabel],
) -> Result<TrainOutcome> {
    let (model, seed) = fresh_student(config, target.vocabulary(), stage)?;
    let (corpus, transcripts) = training_pairs(target, labels)?;
    train(&model, &corpus, &transcripts, &config.student_train.with(seed, LabelMode::PseudoHard))
        .map_err(|e| stage_context(&format!("student {stage}"), e))
}

/// The soft-label baseline: matches each utterance's Top-1 teacher grid.
pub fn train_kl_student(
    config: &PipelineConfig,
    target: &Corpus,
    selected_grids: &[PosteriorGrid],
) -> Result<TrainOutcome> {
    let (model, seed) = fresh_student(config, target.vocabulary(), 1)?;
    kl_distill_train(
        &model,
        &target.without_references(),
        selected_grids,
        &config.student_train.with(seed, LabelMode::PseudoSoftKl),
    )
    .map_err(|e| stage_context("KL baseline", e))
}

/// Test-set decodes without and with the LM, and their pooled WERs.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub no_lm: WerBreakdown,
    pub with_lm: WerBreakdown,
    pub decodes_no_lm: Vec<PseudoLabel>,
    pub decodes_with_lm: Vec<PseudoLabel>,
}

pub fn evaluate_grids(
    grids: &[PosteriorGrid],
    test: &Corpus,
    lm: Option<&NGramModel>,
    decode: &DecodeConfig,
) -> Result<Evaluation> {
    let vocab = test.vocabulary();
    let run = |lm: Option<&NGramModel>, cfg: &DecodeConfig| -> Result<(Vec<PseudoLabel>, WerBreakdown)> {
        let decoded: Vec<PseudoLabel> = decode_each(grids.iter(), lm, cfg, vocab)
            .into_iter()
            .zip(grids)
            .map(|(d, g)| d.map(|d| PseudoLabel::from_decoded(g.utterance_id(), &d)))
            .collect::<Result<_>>()?;
        let wer = label_wer(&decoded, test)?;
        Ok((decoded, wer))
    };
    let (decodes_no_lm, no_lm) = run(None, &without_lm(decode))?;
    let (decodes_with_lm, with_lm) = match lm {
        Some(lm) => run(Some(lm), decode)?,
        None => (decodes_no_lm.clone(), no_lm.clone()),
    };
    Ok(Evaluation {
        no_lm,
        with_lm,
        decodes_no_lm,
        decodes_with_lm,
    })
}

/// Decodes every test utterance with `alpha = beta = 0` and with the tuned
/// settings, and pools WER for each.
pub fn evaluate(
    model: &AcousticModel,
    test: &Corpus,
    lm: Option<&NGramModel>,
    decode: &DecodeConfig,
) -> Result<Evaluation> {
    evaluate_grids(&model.infer_corpus(test)?, test, lm, decode)
}

/// WERs of one evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEval {
    pub model: String,
    pub test_no_lm: WerBreakdown,
    pub test_with_lm: WerBreakdown,
}

/// One row of the stage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageReport {
    pub stage: usize,
    /// `teachers` at stage 0, `S<k>` after.
    pub model: String,
    /// WER of the labels this stage produced on the target training set;
    /// absent without diagnostics.
    pub train_pseudo_wer_no_lm: Option<WerBreakdown>,
    pub train_pseudo_wer_with_lm: Option<WerBreakdown>,
    /// Test WER of the stage's model: the Top-1 ensemble at stage 0.
    pub test_wer_no_lm: WerBreakdown,
    pub test_wer_with_lm: WerBreakdown,
    /// Stage 0: fraction of utterances where Top-1 agrees with the oracle.
    pub selection_accuracy: Option<f64>,
    /// Stage 0: how many labels came from each teacher.
    pub provenance_counts: Vec<usize>,
    /// Stage 0: every teacher's own test WERs.
    pub teachers: Vec<ModelEval>,
    /// Utterances without a fresh label at this stage (decode failures).
    pub skipped_utterances: usize,
    /// Of those, how many kept the previous stage's label.
    pub carried_forward: usize,
    /// Utterances the stage's training could not use.
    pub training_skipped: usize,
}

/// A baseline student's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineReport {
    /// `S_KL` or `S_Or`.
    pub model: String,
    /// WER of the baseline's training targets (hard oracle labels only).
    pub train_pseudo_wer_with_lm: Option<WerBreakdown>,
    pub test_wer_no_lm: WerBreakdown,
    pub test_wer_with_lm: WerBreakdown,
}

/// How [`run_multistage`] should proceed.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Parent of the run directory.
    pub runs_dir: PathBuf,
    /// Return right after this stage completes, leaving the run resumable.
    pub halt_after_stage: Option<usize>,
}

impl RunOptions {
    pub fn new(runs_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            runs_dir: runs_dir.into(),
            halt_after_stage: None,
        }
    }
}

/// Stage directory name.
pub fn stage_dir(stage: usize) -> String {
    format!("stage{stage}")
}

pub const DATA_STEP: &str = "data";
pub const LM_STEP: &str = "lm";
pub const TUNING_STEP: &str = "tuning";
pub const LM_FILE: &str = "lm.arpa";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const LABELS_NO_LM_FILE: &str = "labels_no_lm.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const SELECTED_GRIDS_FILE: &str = "selected.grids";
pub const ORACLE_LABELS_FILE: &str = "oracle_labels.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const TUNING_FILE: &str = "tuning.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const WER_TABLE_FILE: &str = "report.tsv";
pub const STAGE_TABLE_FILE: &str = "stages.tsv";

pub fn teacher_step(i: usize) -> String {
    format!("teacher{i}")
}

pub fn manifest_file(corpus_name: &str) -> String {
    format!("{corpus_name}.manifest")
}

fn manifest_files(corpus_name: &str) -> [String; 2] {
    let m = manifest_file(corpus_name);
    let sidecar = format!("{m}.f32");
    [m, sidecar]
}

/// Test decode records of a model: `test_<model>_<lm|no_lm>.jsonl`.
pub fn test_decode_file(model: &str, with_lm: bool) -> String {
    format!("test_{model}_{}.jsonl", if with_lm { "lm" } else { "no_lm" })
}

/// Tuned decoder settings as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningRecord {
    pub alpha: f64,
    pub beta: f64,
    pub validation_wer: f64,
    /// `(alpha, beta, wer)` for every grid point.
    pub table: Vec<(f64, f64, f64)>,
    /// `matrix[i][j]`: teacher `i` on source validation set `j`, no LM.
    pub domain_matrix: Vec<Vec<WerBreakdown>>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    io::write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = io::read_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), "document", e.to_string()))
}

fn save_eval(store: &Store, step: &str, model: &str, eval: &Evaluation, vocab: &Vocabulary, files: &mut Vec<String>) -> Result<()> {
    for (with_lm, recs) in [(false, &eval.decodes_no_lm), (true, &eval.decodes_with_lm)] {
        let f = test_decode_file(model, with_lm);
        save_labels(recs, vocab, &store.path(step, &f))?;
        files.push(f);
    }
    Ok(())
}

/// Everything a run has produced, loaded back from disk.
struct Context {
    config: PipelineConfig,
    store: Store,
    data: RunData,
    lm: NGramModel,
    decode: DecodeConfig,
}

fn ensure_data(config: &PipelineConfig, store: &Store) -> Result<RunData> {
    if !store.completed(DATA_STEP)? {
        let data = generate_data(config)?;
        let mut files = Vec::new();
        for c in data.corpora() {
            save_manifest(c, &store.path(DATA_STEP, &manifest_file(c.name())))?;
            files.extend(manifest_files(c.name()));
        }
        store.commit(DATA_STEP, &files)?;
    }
    let load = |name: String| load_manifest(&store.path(DATA_STEP, &manifest_file(&name)));
    let mut source_train = Vec::new();
    let mut source_valid = Vec::new();
    for t in &config.teachers {
        source_train.push(load(format!("{}-train", t.name))?);
        source_valid.push(load(format!("{}-valid", t.name))?);
    }
    let mut target_train = load(format!("{}-train", config.target.name))?;
    if !config.diagnostics {
        target_train = target_train.without_references();
    }
    Ok(RunData {
        vocab: config.vocabulary()?,
        source_train,
        source_valid,
        target_train,
        target_test: load(format!("{}-test", config.target.name))?,
    })
}

fn ensure_teachers(ctx: &Context) -> Result<Vec<AcousticModel>> {
    let mut teachers = Vec::new();
    for (i, corpus) in ctx.data.source_train.iter().enumerate() {
        let step = teacher_step(i);
        if !ctx.store.completed(&step)? {
            log::info!("training teacher {i} on {}", corpus.name());
            let out = train_teacher(&ctx.config, i, corpus)?;
            save_checkpoint(&out.model, &ctx.store.path(&step, CHECKPOINT_FILE))?;
            ctx.store.commit(&step, &[CHECKPOINT_FILE.into()])?;
        }
        teachers.push(load_checkpoint(&ctx.store.path(&step, CHECKPOINT_FILE))?);
    }
    Ok(teachers)
}

fn ensure_lm(config: &PipelineConfig, store: &Store, data: &RunData) -> Result<NGramModel> {
    if !store.completed(LM_STEP)? {
        let lm = train_lm(config, &data.source_train)?;
        save_arpa(&lm, &store.path(LM_STEP, LM_FILE))?;
        store.commit(LM_STEP, &[LM_FILE.into()])?;
    }
    load_arpa(&store.path(LM_STEP, LM_FILE))
}

/// Per-teacher, per-validation-set WER without the LM.
pub fn domain_matrix(
    teachers: &[AcousticModel],
    valid: &[Corpus],
    decode: &DecodeConfig,
) -> Result<Vec<Vec<WerBreakdown>>> {
    teachers
        .iter()
        .map(|t| {
            valid
                .iter()
                .map(|c| evaluate(t, c, None, decode).map(|e| e.no_lm))
                .collect()
        })
        .collect()
}

fn ensure_tuning(
    config: &PipelineConfig,
    store: &Store,
    data: &RunData,
    teachers: &[AcousticModel],
    lm: &NGramModel,
) -> Result<TuningRecord> {
    if !store.completed(TUNING_STEP)? {
        log::info!("tuning alpha and beta on source validation data");
        let tuning = tune_decoder(config, teachers, &data.source_valid, lm)?;
        let record = TuningRecord {
            alpha: tuning.config.alpha,
            beta: tuning.config.beta,
            validation_wer: tuning.wer,
            table: tuning.table,
            domain_matrix: domain_matrix(teachers, &data.source_valid, &config.decode.base())?,
        };
        write_json(&store.path(TUNING_STEP, TUNING_FILE), &record)?;
        store.commit(TUNING_STEP, &[TUNING_FILE.into()])?;
    }
    read_json(&store.path(TUNING_STEP, TUNING_FILE))
}

fn stage0(ctx: &Context, teachers: &[AcousticModel]) -> Result<StageReport> {
    let step = stage_dir(0);
    if !ctx.store.completed(&step)? {
        log::info!("stage 0: labelling the target with the teacher ensemble");
        let (target, test, vocab) = (&ctx.data.target_train, &ctx.data.target_test, &ctx.data.vocab);
        let grid_sets: Vec<Vec<PosteriorGrid>> =
            teachers.iter().map(|t| t.infer_corpus(target)).collect::<Result<_>>()?;
        let with_lm = labels_from_grids(&grid_sets, Some(&ctx.lm), &ctx.decode, vocab, 0)?;
        let no_lm = labels_from_grids(&grid_sets, None, &without_lm(&ctx.decode), vocab, 0)?;
        let selections = with_lm.selections.as_ref().expect("ensemble selections");
        let selected: Vec<PosteriorGrid> = selections
            .iter()
            .enumerate()
            .map(|(u, s)| grid_sets[s.selected_teacher][u].clone())
            .collect();
        let mut files = vec![
            LABELS_FILE.to_string(),
            LABELS_NO_LM_FILE.into(),
            SELECTED_GRIDS_FILE.into(),
            AUDIT_FILE.into(),
        ];
        save_labels(&with_lm.labels, vocab, &ctx.store.path(&step, LABELS_FILE))?;
        save_labels(&no_lm.labels, vocab, &ctx.store.path(&step, LABELS_NO_LM_FILE))?;
        save_grids(&selected, &ctx.store.path(&step, SELECTED_GRIDS_FILE))?;

        let diagnostic = target.labelled();
        let oracle = if diagnostic {
            let (labels, sel) = oracle_labels(&grid_sets, target, Some(&ctx.lm), &ctx.decode)?;
            save_labels(&labels, vocab, &ctx.store.path(&step, ORACLE_LABELS_FILE))?;
            files.push(ORACLE_LABELS_FILE.into());
            Some(sel)
        } else {
            None
        };
        let audit: Vec<AuditRecord> = selections
            .iter()
            .enumerate()
            .map(|(u, s)| AuditRecord::new(s, oracle.as_ref().map(|o| &o[u])))
            .collect();
        save_audit(&audit, &ctx.store.path(&step, AUDIT_FILE))?;

        let mut provenance_counts = vec![0; teachers.len()];
        for l in &with_lm.labels {
            if let Some(Provenance::Teacher(i)) = l.provenance {
                provenance_counts[i] += 1;
            }
        }
        let mut teacher_evals = Vec::new();
        let mut test_sets = Vec::new();
        for (i, t) in teachers.iter().enumerate() {
            let grids = t.infer_corpus(test)?;
            let eval = evaluate_grids(&grids, test, Some(&ctx.lm), &ctx.decode)?;
            let name = format!("T{}", i + 1);
            save_eval(&ctx.store, &step, &name, &eval, vocab, &mut files)?;
            teacher_evals.push(ModelEval {
                model: format!("{name}:{}", ctx.config.teachers[i].name),
                test_no_lm: eval.no_lm,
                test_with_lm: eval.with_lm,
            });
            test_sets.push(grids);
        }
        // The ensemble on the test set: Top-1 per utterance, then decode.
        let ens_selected: Vec<PosteriorGrid> = (0..test.len())
            .map(|u| {
                let grids: Vec<&PosteriorGrid> = test_sets.iter().map(|g| &g[u]).collect();
                select_top1(&grids).map(|s| grids[s.selected_teacher].clone())
            })
            .collect::<Result<_>>()?;
        let ens = evaluate_grids(&ens_selected, test, Some(&ctx.lm), &ctx.decode)?;
        save_eval(&ctx.store, &step, "top1", &ens, vocab, &mut files)?;

        let report = StageReport {
            stage: 0,
            model: "teachers".into(),
            train_pseudo_wer_no_lm: diagnostic.then(|| label_wer(&no_lm.labels, target)).transpose()?,
            train_pseudo_wer_with_lm: diagnostic.then(|| label_wer(&with_lm.labels, target)).transpose()?,
            test_wer_no_lm: ens.no_lm,
            test_wer_with_lm: ens.with_lm,
            selection_accuracy: agreement(&audit),
            provenance_counts,
            teachers: teacher_evals,
            skipped_utterances: with_lm.skipped.len(),
            carried_forward: 0,
            training_skipped: 0,
        };
        write_json(&ctx.store.path(&step, REPORT_FILE), &report)?;
        files.push(REPORT_FILE.into());
        ctx.store.commit(&step, &files)?;
    }
    read_json(&ctx.store.path(&step, REPORT_FILE))
}

/// Replaces missing labels with the previous stage's, in corpus order.
fn carry_forward(target: &Corpus, fresh: Vec<PseudoLabel>, previous: &[PseudoLabel]) -> (Vec<PseudoLabel>, usize) {
    let mut fresh: std::collections::HashMap<String, PseudoLabel> =
        fresh.into_iter().map(|l| (l.utterance_id.clone(), l)).collect();
    let prev: std::collections::HashMap<&str, &PseudoLabel> =
        previous.iter().map(|l| (l.utterance_id.as_str(), l)).collect();
    let mut out = Vec::with_capacity(target.len());
    let mut carried = 0;
    for u in target.utterances() {
        if let Some(l) = fresh.remove(&u.id) {
            out.push(l);
        } else if let Some(l) = prev.get(u.id.as_str()) {
            out.push((*l).clone());
            carried += 1;
        }
    }
    (out, carried)
}

fn student_stage(ctx: &Context, k: usize, previous: &[PseudoLabel]) -> Result<StageReport> {
    let step = stage_dir(k);
    let vocab = &ctx.data.vocab;
    if !ctx.store.completed(&step)? {
        log::info!("stage {k}: training student S{k}");
        let target = &ctx.data.target_train;
        let out = train_student(&ctx.config, k, target, previous)?;
        save_checkpoint(&out.model, &ctx.store.path(&step, CHECKPOINT_FILE))?;
        // Continue with the model as it reads back from disk.
        let model = load_checkpoint(&ctx.store.path(&step, CHECKPOINT_FILE))?;
        let mut files = vec![CHECKPOINT_FILE.to_string(), LABELS_FILE.into(), LABELS_NO_LM_FILE.into()];
        let eval = evaluate(&model, &ctx.data.target_test, Some(&ctx.lm), &ctx.decode)?;
        let name = format!("S{k}");
        save_eval(&ctx.store, &step, &name, &eval, vocab, &mut files)?;

        let grids = vec![model.infer_corpus(target)?];
        let with_lm = labels_from_grids(&grids, Some(&ctx.lm), &ctx.decode, vocab, k)?;
        let skipped = with_lm.skipped.len();
        let (labels, carried) = carry_forward(target, with_lm.labels, previous);
        let no_lm = labels_from_grids(&grids, None, &without_lm(&ctx.decode), vocab, k)?;
        save_labels(&labels, vocab, &ctx.store.path(&step, LABELS_FILE))?;
        save_labels(&no_lm.labels, vocab, &ctx.store.path(&step, LABELS_NO_LM_FILE))?;
        let diagnostic = target.labelled();
        let report = StageReport {
            stage: k,
            model: name,
            train_pseudo_wer_no_lm: diagnostic.then(|| label_wer(&no_lm.labels, target)).transpose()?,
            train_pseudo_wer_with_lm: diagnostic.then(|| label_wer(&labels, target)).transpose()?,
            test_wer_no_lm: eval.no_lm,
            test_wer_with_lm: eval.with_lm,
            selection_accuracy: None,
            provenance_counts: Vec::new(),
            teachers: Vec::new(),
            skipped_utterances: skipped,
            carried_forward: carried,
            training_skipped: out.skipped.len(),
        };
        write_json(&ctx.store.path(&step, REPORT_FILE), &report)?;
        files.push(REPORT_FILE.into());
        ctx.store.commit(&step, &files)?;
    }
    read_json(&ctx.store.path(&step, REPORT_FILE))
}

pub const KL_BASELINE: &str = "S_KL";
pub const ORACLE_BASELINE: &str = "S_Or";

fn baseline(ctx: &Context, name: &str) -> Result<BaselineReport> {
    let step = format!("baseline_{name}");
    let vocab = &ctx.data.vocab;
    let stage0 = stage_dir(0);
    if !ctx.store.completed(&step)? {
        log::info!("training baseline {name}");
        let target = &ctx.data.target_train;
        let (out, train_wer) = if name == KL_BASELINE {
            let grids = load_grids(&ctx.store.path(&stage0, SELECTED_GRIDS_FILE))?;
            (train_kl_student(&ctx.config, target, &grids)?, None)
        } else {
            let path = ctx.store.path(&stage0, ORACLE_LABELS_FILE);
            if !target.labelled() {
                return Err(Error::param("the oracle baseline needs a labelled target (diagnostics = true)"));
            }
            let labels = load_labels(&path, vocab)?;
            let wer = label_wer(&labels, target)?;
            (train_student(&ctx.config, 1, target, &labels)?, Some(wer))
        };
        save_checkpoint(&out.model, &ctx.store.path(&step, CHECKPOINT_FILE))?;
        let model = load_checkpoint(&ctx.store.path(&step, CHECKPOINT_FILE))?;
        let eval = evaluate(&model, &ctx.data.target_test, Some(&ctx.lm), &ctx.decode)?;
        let mut files = vec![CHECKPOINT_FILE.to_string()];
        save_eval(&ctx.store, &step, name, &eval, vocab, &mut files)?;
        let report = BaselineReport {
            model: name.into(),
            train_pseudo_wer_with_lm: train_wer,
            test_wer_no_lm: eval.no_lm,
            test_wer_with_lm: eval.with_lm,
        };
        write_json(&ctx.store.path(&step, REPORT_FILE), &report)?;
        files.push(REPORT_FILE.into());
        ctx.store.commit(&step, &files)?;
    }
    read_json(&ctx.store.path(&step, REPORT_FILE))
}

/// Why the stage loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The last student did not improve the with-LM test WER enough.
    NoImprovement,
    MaxStages,
}

/// Whether the student at `stage` failed to improve on its predecessor: the
/// previous student, or at stage 1 the best single teacher.
pub fn should_stop(reports: &[StageReport], stop_tolerance: f64) -> bool {
    let last = reports.last().expect("at least one stage");
    let prev = if last.stage == 1 {
        best_teacher_wer(&reports[0])
    } else {
        reports[reports.len() - 2].test_wer_with_lm.wer
    };
    last.test_wer_with_lm.wer > prev - stop_tolerance
}

/// Lowest with-LM test WER among the individual teachers.
pub fn best_teacher_wer(stage0: &StageReport) -> f64 {
    stage0
        .teachers
        .iter()
        .map(|t| t.test_with_lm.wer)
        .fold(f64::INFINITY, f64::min)
}

/// Runs (or resumes) the whole method and writes the summary and tables.
pub fn run_multistage(config: &PipelineConfig, options: &RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let store = Store::open(&config.run_dir(&options.runs_dir), &config.to_toml())?;
    let data = ensure_data(config, &store)?;
    let lm = ensure_lm(config, &store, &data)?;
    let mut ctx = Context {
        config: config.clone(),
        store,
        data,
        lm,
        decode: config.decode.base(),
    };
    let teachers = ensure_teachers(&ctx)?;
    let tuning = ensure_tuning(config, &ctx.store, &ctx.data, &teachers, &ctx.lm)?;
    ctx.decode = DecodeConfig {
        alpha: tuning.alpha,
        beta: tuning.beta,
        ..config.decode.base()
    };
    let halted = |k: usize| options.halt_after_stage == Some(k);

    let mut reports = vec![stage0(&ctx, &teachers)?];
    drop(teachers);
    if halted(0) {
        return Ok(RunSummary::partial(config, tuning, reports));
    }
    let mut labels = load_labels(&ctx.store.path(&stage_dir(0), LABELS_FILE), &ctx.data.vocab)?;
    let mut stop_reason = StopReason::MaxStages;
    for k in 1..=config.max_stages {
        reports.push(student_stage(&ctx, k, &labels)?);
        if halted(k) {
            return Ok(RunSummary::partial(config, tuning, reports));
        }
        if should_stop(&reports, config.stop_tolerance) {
            stop_reason = StopReason::NoImprovement;
            break;
        }
        labels = load_labels(&ctx.store.path(&stage_dir(k), LABELS_FILE), &ctx.data.vocab)?;
    }
    let mut baselines = Vec::new();
    if config.baselines {
        baselines.push(baseline(&ctx, KL_BASELINE)?);
        if ctx.data.target_train.labelled() {
            baselines.push(baseline(&ctx, ORACLE_BASELINE)?);
        }
    }
    let summary = RunSummary::complete(config, tuning, reports, baselines, stop_reason);
    summary.write(ctx.store.root())?;
    Ok(summary)
}

