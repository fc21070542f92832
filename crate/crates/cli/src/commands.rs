//! One function per subcommand, each a thin binding over the library.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use stagewise::acoustic::{load_checkpoint, save_checkpoint};
use stagewise::corpus::{load_manifest, save_manifest};
use stagewise::ctc::{load_grids, save_grids, PosteriorGrid};
use stagewise::decoder::{load_labels, save_labels, DecodeConfig, Provenance, PseudoLabel};
use stagewise::lm::{load_arpa, save_arpa, NGramModel};
use stagewise::metrics::{format_report, ReportRow};
use stagewise::pipeline::{self, PipelineConfig, RunOptions, RunSummary, TuningRecord};
use stagewise::selection::{load_audit, save_audit, select_top1_with, AuditRecord, ScoreMode};
use stagewise::{Error, Vocabulary};

use crate::{Command, ConfigArgs};

/// A request the tool refuses before touching any data.
#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error("--alpha {0} needs --lm: the LM weight is only meaningful with an LM")]
    AlphaWithoutLm(f64),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    /// Test WER per model and LM condition.
    Wer,
    /// Pseudo-label and test WER per stage.
    Stages,
    Both,
}

/// Decoder weights from a tuning record, overridable per flag.
#[derive(Args, Debug, Clone)]
pub struct WeightArgs {
    /// ARPA language model for shallow fusion.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// `tuning.json` providing `alpha` and `beta`.
    #[arg(long)]
    pub tuning: Option<PathBuf>,
    /// LM weight (default: from --tuning, else 0).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Word insertion bonus (default: from --tuning, else 0).
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Beam width (default: from the configuration).
    #[arg(long)]
    pub beam: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Posterior grids to decode.
    #[arg(long)]
    pub grids: PathBuf,
    /// Selection audit: label provenance is the selected teacher.
    #[arg(long, conflicts_with = "stage")]
    pub selection: Option<PathBuf>,
    /// Label provenance is the student of this stage.
    #[arg(long)]
    pub stage: Option<usize>,
    /// Labels to fall back on for utterances whose decoding fails.
    #[arg(long)]
    pub previous: Option<PathBuf>,
    /// Output label file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled test manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the model in the printed table.
    #[arg(long, default_value = "model")]
    pub name: String,
    /// Directory for the per-utterance decode records.
    #[arg(long)]
    pub decodes: Option<PathBuf>,
}

/// Exit-status class of an error and its code.
pub fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    if e.downcast_ref::<UsageError>().is_some() {
        return ("usage", 2);
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Parameter(_)) => ("usage", 2),
        Some(Error::Format { .. }) => ("format", 3),
        Some(Error::Io { .. }) => ("io", 3),
        Some(Error::InfeasibleTarget { .. } | Error::ZeroLikelihood) => ("data", 3),
        Some(Error::Integrity { .. }) => ("integrity", 4),
        None => ("internal", 1),
    }
}

/// The error and its causes on one line.
pub fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace(['\n', '\r'], " ")
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError::Invalid(msg.into()).into()
}

/// The configuration file (or the defaults) with flag overrides applied.
pub fn resolve_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(run_id) = &args.run_id {
        config.run_id = run_id.clone();
    }
    if let Some(m) = args.max_stages {
        config.max_stages = m;
    }
    config.validate()?;
    Ok(config)
}

/// Pretty JSON with a trailing newline, as the pipeline writes it.
fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    stagewise::io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn load_corpora(paths: &[PathBuf]) -> Result<Vec<stagewise::Corpus>> {
    Ok(paths.iter().map(|p| load_manifest(p)).collect::<stagewise::Result<_>>()?)
}

/// The decoder settings and LM a decode or evaluation should use.
fn decoder_setup(config: &PipelineConfig, w: &WeightArgs) -> Result<(DecodeConfig, Option<NGramModel>)> {
    let tuned: Option<TuningRecord> = w
        .tuning
        .as_ref()
        .map(|p| -> Result<TuningRecord> {
            let text = stagewise::io::read_string(p)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::Format {
                    path: p.display().to_string(),
                    record: "document".into(),
                    message: e.to_string(),
                }
                .into()
            })
        })
        .transpose()?;
    let alpha = w.alpha.or(tuned.as_ref().map(|t| t.alpha)).unwrap_or(0.0);
    let beta = w.beta.or(tuned.as_ref().map(|t| t.beta)).unwrap_or(0.0);
    if w.lm.is_none() && alpha != 0.0 {
        return Err(UsageError::AlphaWithoutLm(alpha).into());
    }
    let mut decode = DecodeConfig {
        alpha,
        beta,
        ..config.decode.base()
    };
    if let Some(b) = w.beam {
        decode.beam_width = b;
    }
    decode.validate()?;
    let lm = w.lm.as_deref().map(load_arpa).transpose()?;
    Ok((decode, lm))
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Config { config } => {
            print!("{}", resolve_config(&config)?.to_toml());
            Ok(())
        }
        Command::GenData { config, out } => gen_data(&resolve_config(&config)?, &out),
        Command::TrainTeacher { config, index, data, out } => {
            let config = resolve_config(&config)?;
            if index >= config.teachers.len() {
                return Err(usage(format!(
                    "--index {index} but the configuration has {} teachers",
                    config.teachers.len()
                )));
            }
            let corpus = load_manifest(&data)?;
            let outcome = pipeline::train_teacher(&config, index, &corpus)?;
            save_checkpoint(&outcome.model, &out)?;
            if let Some(loss) = outcome.loss_curve.last() {
                log::info!("teacher {index}: final epoch loss {loss:.4}");
            }
            Ok(())
        }
        Command::TrainLm { config, data, out } => {
            let config = resolve_config(&config)?;
            let lm = pipeline::train_lm(&config, &load_corpora(&data)?)?;
            save_arpa(&lm, &out)?;
            Ok(())
        }
        Command::Tune { config, models, data, lm, out } => {
            let config = resolve_config(&config)?;
            let teachers = models
                .iter()
                .map(|p| load_checkpoint(p))
                .collect::<stagewise::Result<Vec<_>>>()?;
            let valid = load_corpora(&data)?;
            let lm = load_arpa(&lm)?;
            let tuning = pipeline::tune_decoder(&config, &teachers, &valid, &lm)?;
            let record = TuningRecord {
                alpha: tuning.config.alpha,
                beta: tuning.config.beta,
                validation_wer: tuning.wer,
                table: tuning.table,
                domain_matrix: pipeline::domain_matrix(&teachers, &valid, &config.decode.base())?,
            };
            write_json(&out, &record)?;
            println!("alpha={} beta={} validation_wer={:.4}", record.alpha, record.beta, record.validation_wer);
            Ok(())
        }
        Command::Infer { model, data, out } => {
            let model = load_checkpoint(&model)?;
            let grids = model.infer_corpus(&load_manifest(&data)?)?;
            save_grids(&grids, &out)?;
            Ok(())
        }
        Command::Select { config, grids, out, audit, exclude_blank } => {
            let mode = if exclude_blank {
                ScoreMode::Excluding(resolve_config(&config)?.vocabulary()?.blank_index())
            } else {
                ScoreMode::AllSymbols
            };
            select(&grids, &out, &audit, mode)
        }
        Command::Decode(args) => decode(&args),
        Command::TrainStudent { config, stage, data, labels, soft_grids, out } => {
            let config = resolve_config(&config)?;
            if stage == 0 {
                return Err(usage("--stage counts students from 1"));
            }
            let target = load_manifest(&data)?;
            let outcome = match (labels, soft_grids) {
                (Some(labels), None) => {
                    let labels = load_labels(&labels, target.vocabulary())?;
                    pipeline::train_student(&config, stage, &target, &labels)?
                }
                (None, Some(grids)) => pipeline::train_kl_student(&config, &target, &load_grids(&grids)?)?,
                _ => return Err(usage("give exactly one of --labels and --soft-grids")),
            };
            save_checkpoint(&outcome.model, &out)?;
            if !outcome.skipped.is_empty() {
                log::warn!("{} utterances could not be used for training", outcome.skipped.len());
            }
            Ok(())
        }
        Command::Evaluate(args) => evaluate(&args),
        Command::RunPipeline { config, runs_dir, halt_after_stage } => {
            let config = resolve_config(&config)?;
            let options = RunOptions {
                runs_dir,
                halt_after_stage,
            };
            let summary = pipeline::run_multistage(&config, &options)?;
            let run_dir = config.run_dir(&options.runs_dir);
            if summary.is_complete() {
                print!("{}", pipeline::render_wer_table(&summary));
                eprintln!("run complete: {}", run_dir.display());
            } else {
                print!("{}", pipeline::render_stage_table(&summary));
                eprintln!("run halted after stage {}: {}", summary.stages.len() - 1, run_dir.display());
            }
            Ok(())
        }
        Command::Report { run_dir, table } => {
            let summary = pipeline::audit_run(&run_dir)?;
            print!("{}", render(&summary, table));
            Ok(())
        }
    }
}

pub fn render(summary: &RunSummary, table: Table) -> String {
    match table {
        Table::Wer => pipeline::render_wer_table(summary),
        Table::Stages => pipeline::render_stage_table(summary),
        Table::Both => format!(
            "{}\n{}",
            pipeline::render_wer_table(summary),
            pipeline::render_stage_table(summary)
        ),
    }
}

fn gen_data(config: &PipelineConfig, out: &Path) -> Result<()> {
    let data = pipeline::generate_data(config)?;
    for c in data.corpora() {
        let path = out.join(pipeline::manifest_file(c.name()));
        save_manifest(c, &path)?;
        println!("{}\t{}", c.name(), path.display());
    }
    Ok(())
}

fn select(paths: &[PathBuf], out: &Path, audit: &Path, mode: ScoreMode) -> Result<()> {
    let sets = paths
        .iter()
        .map(|p| load_grids(p))
        .collect::<stagewise::Result<Vec<Vec<PosteriorGrid>>>>()?;
    let n = sets[0].len();
    if let Some((p, s)) = paths.iter().zip(&sets).find(|(_, s)| s.len() != n) {
        return Err(usage(format!(
            "{} has {} grids but {} has {n}",
            p.display(),
            s.len(),
            paths[0].display()
        )));
    }
    let mut selected = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for u in 0..n {
        let grids: Vec<&PosteriorGrid> = sets.iter().map(|s| &s[u]).collect();
        if let Some(g) = grids.iter().find(|g| g.utterance_id() != grids[0].utterance_id()) {
            return Err(usage(format!(
                "grid {u} is {} in one file and {} in another",
                grids[0].utterance_id(),
                g.utterance_id()
            )));
        }
        let sel = select_top1_with(&grids, mode)?;
        selected.push(grids[sel.selected_teacher].clone());
        records.push(AuditRecord::new(&sel, None));
    }
    save_grids(&selected, out)?;
    save_audit(&records, audit)?;
    Ok(())
}

fn decode(args: &DecodeArgs) -> Result<()> {
    let config = resolve_config(&args.config)?;
    let vocab: Vocabulary = config.vocabulary()?;
    let (decode, lm) = decoder_setup(&config, &args.weights)?;
    let grids = load_grids(&args.grids)?;
    let stage = args.stage.unwrap_or(0);
    let fresh = pipeline::labels_from_grids(&[grids.clone()], lm.as_ref(), &decode, &vocab, stage)?;
    let provenance: HashMap<String, Provenance> = match (&args.selection, args.stage) {
        (Some(audit), _) => load_audit(audit)?
            .into_iter()
            .map(|r| (r.id, Provenance::Teacher(r.selected)))
            .collect(),
        (None, Some(k)) => grids
            .iter()
            .map(|g| (g.utterance_id().to_string(), Provenance::Stage(k)))
            .collect(),
        (None, None) => HashMap::new(),
    };
    let mut fresh: HashMap<String, PseudoLabel> =
        fresh.labels.into_iter().map(|l| (l.utterance_id.clone(), l)).collect();
    let previous: HashMap<String, PseudoLabel> = match &args.previous {
        Some(p) => load_labels(p, &vocab)?
            .into_iter()
            .map(|l| (l.utterance_id.clone(), l))
            .collect(),
        None => HashMap::new(),
    };
    let mut labels = Vec::with_capacity(grids.len());
    for g in &grids {
        let id = g.utterance_id();
        if let Some(mut l) = fresh.remove(id) {
            l.provenance = match provenance.get(id) {
                Some(p) => Some(*p),
                None if args.selection.is_some() => {
                    return Err(usage(format!("{id} is missing from the selection audit")))
                }
                None => None,
            };
            labels.push(l);
        } else if let Some(l) = previous.get(id) {
            log::warn!("{id}: keeping the previous label");
            labels.push(l.clone());
        }
    }
    save_labels(&labels, &vocab, &args.out)?;
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let config = resolve_config(&args.config)?;
    let (decode, lm) = decoder_setup(&config, &args.weights)?;
    let model = load_checkpoint(&args.model)?;
    let test = load_manifest(&args.data)?;
    if !test.labelled() {
        return Err(usage(format!("{} has no references to score against", args.data.display())));
    }
    let eval = pipeline::evaluate(&model, &test, lm.as_ref(), &decode)?;
    if let Some(dir) = &args.decodes {
        for (with_lm, records) in [(false, &eval.decodes_no_lm), (true, &eval.decodes_with_lm)] {
            let path = dir.join(pipeline::test_decode_file(&args.name, with_lm));
            save_labels(records, test.vocabulary(), &path)
                .with_context(|| format!("writing decodes of {}", args.name))?;
        }
    }
    let rows: Vec<ReportRow> = [(false, eval.no_lm), (true, eval.with_lm)]
        .into_iter()
        .map(|(with_lm, breakdown)| ReportRow {
            model: args.name.clone(),
            test_set: test.name().to_string(),
            with_lm,
            breakdown,
        })
        .collect();
    print!("{}", format_report(&rows));
    Ok(())
}
