//! Minibatch SGD for the acoustic model, on CTC targets or on soft teacher
//! posteriors (KL distillation).
//!
//! Each utterance's loss is divided by its frame count so long and short
//! utterances weigh the same; a step averages these over the batch.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{axpy, AcousticModel, Activations};
use crate::corpus::Corpus;
use crate::ctc::{ctc_loss_and_grad, log_softmax_in_place, PosteriorGrid, Transcript};
use crate::error::{Error, Result};
use crate::io::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    GroundTruth,
    PseudoHard,
    PseudoSoftKl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Utterances per step.
    pub batch_size: usize,
    /// Weight decay coefficient added to every parameter's gradient.
    pub l2: f64,
    pub seed: u64,
    pub label_mode: LabelMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 8,
            l2: 0.0,
            seed: 0,
            label_mode: LabelMode::GroundTruth,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::param("l2 must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AcousticModel,
    /// Mean per-frame loss over each epoch's steps.
    pub loss_curve: Vec<f64>,
    /// Utterances left out at least once because their label was infeasible
    /// or had zero likelihood, in corpus order.
    pub skipped: Vec<String>,
}

#[derive(Clone, Copy)]
pub(crate) enum Targets<'a> {
    Transcripts(&'a [Transcript]),
    Grids(&'a [PosteriorGrid]),
}

/// Trains on hard transcripts (ground truth or pseudo-labels) with CTC.
pub fn train(
    model: &AcousticModel,
    corpus: &Corpus,
    labels: &[Transcript],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.label_mode == LabelMode::PseudoSoftKl {
        return Err(Error::param("soft-label mode needs teacher grids; use kl_distill_train"));
    }
    run(model, corpus, Targets::Transcripts(labels), config)
}

/// Trains the student to match teacher posteriors frame by frame under
/// `KL(teacher || student)`.
pub fn kl_distill_train(
    model: &AcousticModel,
    corpus: &Corpus,
    teacher_grids: &[PosteriorGrid],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.label_mode != LabelMode::PseudoSoftKl {
        return Err(Error::param("KL distillation requires label_mode pseudo_soft_kl"));
    }
    run(model, corpus, Targets::Grids(teacher_grids), config)
}

fn check_targets(model: &AcousticModel, corpus: &Corpus, targets: Targets<'_>) -> Result<()> {
    if corpus.vocabulary() != model.vocabulary() {
        return Err(Error::param("corpus and model vocabularies differ"));
    }
    let n = match targets {
        Targets::Transcripts(t) => t.len(),
        Targets::Grids(g) => g.len(),
    };
    if n != corpus.len() {
        return Err(Error::param(format!(
            "{n} labels for {} utterances",
            corpus.len()
        )));
    }
    if let Targets::Grids(grids) = targets {
        for (u, g) in corpus.utterances().iter().zip(grids) {
            if g.num_frames() != u.num_frames() || g.num_symbols() != model.output_dim() {
                return Err(Error::param(format!(
                    "teacher grid for {} is {}x{}, expected {}x{}",
                    u.id,
                    g.num_frames(),
                    g.num_symbols(),
                    u.num_frames(),
                    model.output_dim()
                )));
            }
        }
    }
    Ok(())
}

/// Per-frame loss and parameter gradient for one utterance.
pub(crate) fn utterance_loss_and_grad(
    model: &AcousticModel,
    corpus: &Corpus,
    targets: Targets<'_>,
    i: usize,
) -> Result<(f64, Vec<f64>)> {
    let utt = &corpus.utterances()[i];
    let act = model.activations(&utt.frames)?;
    let t_len = utt.num_frames();
    let v = model.output_dim();
    let mut log_probs = act.acts.last().expect("output layer").clone();
    for row in log_probs.chunks_exact_mut(v) {
        log_softmax_in_place(row);
    }
    let (loss, mut dlogits) = match targets {
        Targets::Transcripts(labels) => {
            let grid = PosteriorGrid::from_log_probs(utt.id.as_str(), t_len, v, log_probs)?;
            ctc_loss_and_grad(&grid, &labels[i], model.vocabulary().blank_index())?
        }
        Targets::Grids(grids) => {
            let q = grids[i].as_slice();
            let mut loss = 0.0;
            let mut d = vec![0.0; t_len * v];
            for k in 0..t_len * v {
                let (lq, lp) = (q[k], log_probs[k]);
                if lq > f64::NEG_INFINITY {
                    loss += lq.exp() * (lq - lp);
                }
                d[k] = lp.exp() - lq.exp();
            }
            (loss, d)
        }
    };
    let scale = 1.0 / t_len as f64;
    for g in &mut dlogits {
        *g *= scale;
    }
    let mut grad = vec![0.0; model.parameters().len()];
    backward(model, &act, dlogits, &mut grad);
    Ok((loss * scale, grad))
}

/// Accumulates parameter gradients given the gradient at the logits.
fn backward(model: &AcousticModel, act: &Activations, mut dz: Vec<f64>, grad: &mut [f64]) {
    let dims = model.layer_dims();
    let offs = model.layer_offsets();
    let params = model.parameters();
    let t_len = act.acts[0].len() / dims[0].0;
    for l in (0..dims.len()).rev() {
        let (din, dout) = dims[l];
        let off = offs[l];
        let input = &act.acts[l];
        let (gw, rest) = grad[off..].split_at_mut(din * dout);
        let gb = &mut rest[..dout];
        let w = &params[off..off + din * dout];
        let mut dinput = if l > 0 { vec![0.0; t_len * din] } else { Vec::new() };
        for t in 0..t_len {
            let x = &input[t * din..(t + 1) * din];
            for o in 0..dout {
                let g = dz[t * dout + o];
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                axpy(&mut gw[o * din..(o + 1) * din], g, x);
                if l > 0 {
                    axpy(&mut dinput[t * din..(t + 1) * din], g, &w[o * din..(o + 1) * din]);
                }
            }
        }
        if l > 0 {
            // Through tanh: d/dz tanh(z) = 1 - tanh(z)^2.
            for (d, a) in dinput.iter_mut().zip(input) {
                *d *= 1.0 - a * a;
            }
            dz = dinput;
        }
    }
}

/// Mean loss and mean gradient over every usable utterance, plus the ids
/// that had to be skipped.
#[cfg(test)]
pub(crate) fn full_objective(
    model: &AcousticModel,
    corpus: &Corpus,
    targets: Targets<'_>,
) -> Result<(f64, Vec<f64>, Vec<String>)> {
    check_targets(model, corpus, targets)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.parameters().len()];
    let mut n = 0;
    let mut skipped = Vec::new();
    for i in 0..corpus.len() {
        match step_item(model, corpus, targets, i)? {
            Some((l, g)) => {
                loss += l;
                axpy(&mut grad, 1.0, &g);
                n += 1;
            }
            None => skipped.push(corpus.utterances()[i].id.clone()),
        }
    }
    let n = n.max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad, skipped))
}

/// `Ok(None)` marks an utterance whose label cannot be trained on.
fn step_item(
    model: &AcousticModel,
    corpus: &Corpus,
    targets: Targets<'_>,
    i: usize,
) -> Result<Option<(f64, Vec<f64>)>> {
    match utterance_loss_and_grad(model, corpus, targets, i) {
        Ok(r) => Ok(Some(r)),
        Err(Error::InfeasibleTarget { .. } | Error::ZeroLikelihood) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run(
    model: &AcousticModel,
    corpus: &Corpus,
    targets: Targets<'_>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_targets(model, corpus, targets)?;
    if corpus.is_empty() {
        return Err(Error::param("cannot train on an empty corpus"));
    }
    let mut model = model.clone();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut skipped = BTreeSet::new();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_n) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<Option<(f64, Vec<f64>)>>> = batch
                .par_iter()
                .map(|&i| step_item(&model, corpus, targets, i))
                .collect();
            let mut grad = vec![0.0; model.parameters().len()];
            let mut n = 0usize;
            for (&i, r) in batch.iter().zip(results) {
                match r? {
                    Some((l, g)) => {
                        epoch_loss += l;
                        epoch_n += 1;
                        axpy(&mut grad, 1.0, &g);
                        n += 1;
                    }
                    None => {
                        if skipped.insert(i) {
                            log::warn!(
                                "skipping {}: label cannot be aligned to its frames",
                                corpus.utterances()[i].id
                            );
                        }
                    }
                }
            }
            if n == 0 || config.learning_rate == 0.0 {
                continue;
            }
            let inv = 1.0 / n as f64;
            let (lr, l2) = (config.learning_rate, config.l2);
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= lr * (g * inv + l2 * *p);
            }
        }
        let mean = if epoch_n > 0 { epoch_loss / epoch_n as f64 } else { f64::NAN };
        log::debug!("epoch {epoch}: mean loss {mean:.5}");
        loss_curve.push(mean);
    }
    if model.parameters().iter().any(|p| !p.is_finite()) {
        return Err(Error::param(
            "training diverged (non-finite parameters); lower the learning rate",
        ));
    }
    model.round_to_f32();
    Ok(TrainOutcome {
        model,
        loss_curve,
        skipped: skipped.into_iter().map(|i| corpus.utterances()[i].id.clone()).collect(),
    })
}
