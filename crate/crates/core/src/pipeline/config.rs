//! Run configuration: a TOML document where every field has a default and
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acoustic::{LabelMode, TrainConfig};
use crate::corpus::{DomainSpec, Vocabulary};
use crate::decoder::{DecodeConfig, LengthUnit, DEFAULT_BEAM_WIDTH, DEFAULT_PRUNE_LOG_THRESHOLD};
use crate::error::{Error, Result};
use crate::io::{mix_seed, tag};

/// A synthetic domain described by a few knobs; expanded into a full
/// [`DomainSpec`] with [`DomainRecipe::to_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainRecipe {
    pub name: String,
    /// Euclidean norm of the fixed channel offset.
    pub shift: f64,
    /// Per-dimension gains are drawn uniformly from `1 ± scale_jitter`.
    pub scale_jitter: f64,
    pub noise_std: f64,
    pub utterance_shift_std: f64,
    pub frames_per_symbol_range: [usize; 2],
    /// Spread of the per-letter word-preference weights (log-normal sigma);
    /// zero means uniform preferences.
    pub bias_strength: f64,
    /// Draws the channel and preferences; two recipes with the same name and
    /// channel seed describe the same domain.
    pub channel_seed: u64,
}

impl Default for DomainRecipe {
    fn default() -> Self {
        DomainRecipe {
            name: "domain".into(),
            shift: 0.0,
            scale_jitter: 0.0,
            noise_std: 0.3,
            utterance_shift_std: 0.0,
            frames_per_symbol_range: [2, 3],
            bias_strength: 0.0,
            channel_seed: 0,
        }
    }
}

impl DomainRecipe {
    /// Expands the recipe. `run_seed` perturbs the channel so that different
    /// run seeds see different (but equally shaped) domains; `corpus_seed`
    /// seeds utterance sampling.
    pub fn to_spec(
        &self,
        vocab: &Vocabulary,
        feature_dim: usize,
        lexicon_size: usize,
        lexicon_seed: u64,
        run_seed: u64,
        corpus_seed: u64,
    ) -> DomainSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
            tag("channel"),
            tag(&self.name),
            self.channel_seed,
            run_seed,
        ]));
        let dir: Vec<f64> = (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let channel_shift = dir.iter().map(|x| self.shift * x / norm).collect();
        let channel_scale = (0..feature_dim)
            .map(|_| 1.0 + self.scale_jitter * rng.random_range(-1.0..=1.0))
            .collect();
        let symbol_unigram_bias = (0..vocab.len())
            .map(|_| (self.bias_strength * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        DomainSpec {
            name: self.name.clone(),
            symbol_unigram_bias,
            frames_per_symbol_range: self.frames_per_symbol_range,
            channel_shift,
            channel_scale,
            noise_std: self.noise_std,
            utterance_shift_std: self.utterance_shift_std,
            seed: corpus_seed,
            lexicon_size,
            lexicon_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Letters in the grapheme vocabulary (plus blank and word delimiter).
    pub letters: usize,
    pub feature_dim: usize,
    pub lexicon_size: usize,
    pub lexicon_seed: u64,
    /// Inclusive range of words per utterance.
    pub words_per_utterance: [usize; 2],
    /// Labelled training utterances per source domain.
    pub source_train: usize,
    /// Labelled held-out utterances per source domain (hyperparameter tuning
    /// and the cross-domain matrix).
    pub source_valid: usize,
    /// Target-domain utterances to pseudo-label.
    pub target_train: usize,
    /// Labelled target-domain test utterances.
    pub target_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            letters: 10,
            feature_dim: 12,
            lexicon_size: 48,
            lexicon_seed: 0,
            words_per_utterance: [2, 4],
            source_train: 200,
            source_valid: 30,
            target_train: 200,
            target_test: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub context_window: usize,
    pub hidden_dims: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context_window: 1,
            hidden_dims: vec![64],
        }
    }
}

/// Training settings for one role; the seed is derived per model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            l2: d.l2,
        }
    }
}

impl TrainSettings {
    pub fn with(&self, seed: u64, label_mode: LabelMode) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            l2: self.l2,
            seed,
            label_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub order: usize,
    pub discount: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            discount: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSettings {
    pub beam_width: usize,
    pub prune_log_threshold: f64,
    pub length_unit: LengthUnit,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// Re-tune alpha and beta before decoding each stage's labels, on the
    /// source validation sets decoded by that stage's model.
    pub retune_per_stage: bool,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            beam_width: DEFAULT_BEAM_WIDTH,
            prune_log_threshold: DEFAULT_PRUNE_LOG_THRESHOLD,
            length_unit: LengthUnit::Words,
            alpha_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5],
            beta_grid: vec![-1.0, 0.0, 1.0, 2.0],
            retune_per_stage: false,
        }
    }
}

impl DecodeSettings {
    pub fn base(&self) -> DecodeConfig {
        DecodeConfig {
            beam_width: self.beam_width,
            alpha: 0.0,
            beta: 0.0,
            prune_log_threshold: self.prune_log_threshold,
            length_unit: self.length_unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run_id: String,
    pub seed: u64,
    /// Student stages to run at most.
    pub max_stages: usize,
    /// A new student must lower the with-LM test WER by more than this
    /// (absolute, as a fraction) for the next stage to run.
    pub stop_tolerance: f64,
    /// Also train the KL-distilled and oracle-label students.
    pub baselines: bool,
    /// Read the target training references to score pseudo-labels and run
    /// oracle selection. They never reach training except through the
    /// oracle baseline.
    pub diagnostics: bool,
    pub data: DataConfig,
    pub teachers: Vec<DomainRecipe>,
    pub target: DomainRecipe,
    pub teacher_model: ModelConfig,
    pub student_model: ModelConfig,
    pub teacher_train: TrainSettings,
    pub student_train: TrainSettings,
    pub lm: LmConfig,
    pub decode: DecodeSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let teacher = |name: &str, k: u64| DomainRecipe {
            name: name.into(),
            shift: 1.5,
            channel_seed: k,
            bias_strength: 0.5,
            ..Default::default()
        };
        PipelineConfig {
            run_id: "run".into(),
            seed: 0,
            max_stages: 3,
            stop_tolerance: 0.001,
            baselines: true,
            diagnostics: true,
            data: DataConfig::default(),
            teachers: vec![teacher("src-a", 1), teacher("src-b", 2), teacher("src-c", 3)],
            target: DomainRecipe {
                name: "target".into(),
                shift: 1.5,
                channel_seed: 4,
                bias_strength: 0.5,
                ..Default::default()
            },
            teacher_model: ModelConfig::default(),
            student_model: ModelConfig::default(),
            teacher_train: TrainSettings::default(),
            student_train: TrainSettings::default(),
            lm: LmConfig::default(),
            decode: DecodeSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| {
            let record = e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "document".into());
            Error::format(origin, record, e.message())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        PipelineConfig::from_toml(&crate::io::read_string(path)?, &path.display().to_string())
    }

    /// The fully resolved configuration, defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.teachers.is_empty() {
            return Err(Error::param("at least one teacher domain is required"));
        }
        if self.max_stages == 0 {
            return Err(Error::param("max_stages must be at least 1"));
        }
        if !(self.stop_tolerance >= 0.0) {
            return Err(Error::param("stop_tolerance must be non-negative"));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return Err(Error::param("run_id must be a plain directory name"));
        }
        let mut names: Vec<&str> = self.teachers.iter().map(|t| t.name.as_str()).collect();
        names.push(&self.target.name);
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::param("domain names must be distinct"));
        }
        if self.baselines && !self.diagnostics {
            return Err(Error::param("the oracle baseline needs diagnostics = true"));
        }
        let d = &self.data;
        if d.source_train == 0 || d.source_valid == 0 || d.target_train == 0 || d.target_test == 0 {
            return Err(Error::param("every corpus needs at least one utterance"));
        }
        if d.feature_dim == 0 {
            return Err(Error::param("feature_dim must be positive"));
        }
        for t in [&self.teacher_train, &self.student_train] {
            t.with(0, LabelMode::GroundTruth).validate()?;
        }
        if self.lm.order == 0 || !(self.lm.discount > 0.0 && self.lm.discount < 1.0) {
            return Err(Error::param("lm order must be >= 1 and discount in (0, 1)"));
        }
        self.decode.base().validate()?;
        if self.decode.alpha_grid.is_empty() || self.decode.beta_grid.is_empty() {
            return Err(Error::param("alpha_grid and beta_grid must be nonempty"));
        }
        if self.decode.alpha_grid.iter().any(|a| !(*a >= 0.0 && a.is_finite()))
            || self.decode.beta_grid.iter().any(|b| !b.is_finite())
        {
            return Err(Error::param("alpha values must be finite and >= 0; beta values finite"));
        }
        self.vocabulary()?;
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::graphemes(self.data.letters)
    }

    pub fn run_dir(&self, runs_dir: &Path) -> PathBuf {
        runs_dir.join(&self.run_id)
    }
}
