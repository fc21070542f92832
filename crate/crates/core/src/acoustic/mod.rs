//! Frame-level MLP acoustic model with a symmetric context window.
//!
//! Each frame's input is the concatenation of frames `t-w ..= t+w` (zeros
//! beyond the edges); hidden layers use `tanh`; the output layer is followed
//! by a log-softmax over the vocabulary.
//!
//! Parameters live in one flat `f64` buffer, layer by layer, each layer as a
//! row-major `out x in` weight matrix followed by its `out` biases. Values are
//! kept representable in `f32` outside of training so checkpoints reload
//! bit-exactly.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{kl_distill_train, train, LabelMode, TrainConfig, TrainOutcome};

use crate::corpus::{Corpus, FeatureMatrix, Utterance, Vocabulary};
use crate::ctc::{log_softmax_in_place, PosteriorGrid};
use crate::error::{Error, Result};
use crate::io::mix_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    input_dim: usize,
    context_window: usize,
    hidden_dims: Vec<usize>,
    vocab: Vocabulary,
    seed: u64,
    params: Vec<f64>,
}

/// Per-layer outputs of one utterance: `acts[0]` is the windowed input,
/// `acts[l]` the output of layer `l` (tanh for hidden layers, logits last).
pub(crate) struct Activations {
    pub acts: Vec<Vec<f64>>,
}

impl AcousticModel {
    /// Random initialization: weights uniform in `±sqrt(6 / (in + out))`,
    /// biases zero, all drawn from a generator seeded by `seed`.
    pub fn new(
        input_dim: usize,
        context_window: usize,
        hidden_dims: &[usize],
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        let mut m = Self::zeros(input_dim, context_window, hidden_dims, vocab, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0xACC0]));
        let dims = m.layer_dims();
        let mut offset = 0;
        for (din, dout) in dims {
            let a = (6.0 / (din + dout) as f64).sqrt();
            for w in &mut m.params[offset..offset + din * dout] {
                *w = rng.random_range(-a..a) as f32 as f64;
            }
            offset += din * dout + dout;
        }
        Ok(m)
    }

    /// A model whose every parameter is zero.
    pub fn zeros(
        input_dim: usize,
        context_window: usize,
        hidden_dims: &[usize],
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::param("input_dim must be positive"));
        }
        if hidden_dims.contains(&0) {
            return Err(Error::param("hidden layer widths must be positive"));
        }
        if vocab.len() < 2 {
            return Err(Error::param("vocabulary needs at least two symbols"));
        }
        let mut m = AcousticModel {
            input_dim,
            context_window,
            hidden_dims: hidden_dims.to_vec(),
            vocab,
            seed,
            params: Vec::new(),
        };
        m.params = vec![0.0; m.layer_dims().iter().map(|(i, o)| i * o + o).sum()];
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn context_window(&self) -> usize {
        self.context_window
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn output_dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    /// Replaces all parameters; values are rounded to `f32` precision.
    pub fn set_parameters(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::param(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("parameters must be finite"));
        }
        self.params = params;
        self.round_to_f32();
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    /// Width of the windowed input.
    pub fn window_dim(&self) -> usize {
        (2 * self.context_window + 1) * self.input_dim
    }

    /// `(in, out)` per layer.
    pub(crate) fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut din = self.window_dim();
        for &h in &self.hidden_dims {
            dims.push((din, h));
            din = h;
        }
        dims.push((din, self.vocab.len()));
        dims
    }

    /// Offset of each layer's weights within the flat buffer.
    pub(crate) fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::new();
        let mut o = 0;
        for (din, dout) in self.layer_dims() {
            offs.push(o);
            o += din * dout + dout;
        }
        offs
    }

    fn windowed(&self, frames: &FeatureMatrix) -> Result<Vec<f64>> {
        if frames.cols() != self.input_dim {
            return Err(Error::param(format!(
                "features have dimension {}, model expects {}",
                frames.cols(),
                self.input_dim
            )));
        }
        let (t_len, f, w) = (frames.rows(), self.input_dim, self.context_window);
        let d = self.window_dim();
        let mut x = vec![0.0; t_len * d];
        for t in 0..t_len {
            for k in 0..=2 * w {
                let src = t as isize + k as isize - w as isize;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let dst = &mut x[t * d + k * f..t * d + (k + 1) * f];
                for (o, &v) in dst.iter_mut().zip(frames.row(src as usize)) {
                    *o = v as f64;
                }
            }
        }
        Ok(x)
    }

    pub(crate) fn activations(&self, frames: &FeatureMatrix) -> Result<Activations> {
        let t_len = frames.rows();
        let mut acts = vec![self.windowed(frames)?];
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        for (l, (&(din, dout), &off)) in dims.iter().zip(&self.layer_offsets()).enumerate() {
            let w = &self.params[off..off + din * dout];
            let b = &self.params[off + din * dout..off + din * dout + dout];
            let input = &acts[l];
            let mut out = vec![0.0; t_len * dout];
            for t in 0..t_len {
                let x = &input[t * din..(t + 1) * din];
                let z = &mut out[t * dout..(t + 1) * dout];
                for o in 0..dout {
                    let v = b[o] + dot(&w[o * din..(o + 1) * din], x);
                    z[o] = if l == last { v } else { v.tanh() };
                }
            }
            acts.push(out);
        }
        Ok(Activations { acts })
    }

    /// Log-posteriors for a feature matrix.
    pub fn forward_frames(&self, id: &str, frames: &FeatureMatrix) -> Result<PosteriorGrid> {
        let mut act = self.activations(frames)?;
        let mut logits = act.acts.pop().expect("output layer");
        let v = self.vocab.len();
        for row in logits.chunks_exact_mut(v) {
            log_softmax_in_place(row);
        }
        PosteriorGrid::from_log_probs(id, frames.rows(), v, logits)
    }

    pub fn forward(&self, utterance: &Utterance) -> Result<PosteriorGrid> {
        self.forward_frames(&utterance.id, &utterance.frames)
    }

    /// Runs the model over a corpus in parallel. Grids are rounded to `f32`
    /// precision, the precision they have once written to disk, so results
    /// are identical whether or not they pass through a file.
    pub fn infer_corpus(&self, corpus: &Corpus) -> Result<Vec<PosteriorGrid>> {
        corpus
            .utterances()
            .par_iter()
            .map(|u| self.forward(u).map(|g| g.to_f32_precision()))
            .collect()
    }

    /// Embeds this model into one with wider hidden layers by zero padding:
    /// new units get zero incoming and outgoing weights and zero bias, so
    /// `tanh(0) = 0` keeps them silent and outputs are unchanged.
    pub fn embed_wider(&self, hidden_dims: &[usize]) -> Result<AcousticModel> {
        if hidden_dims.len() != self.hidden_dims.len()
            || hidden_dims.iter().zip(&self.hidden_dims).any(|(n, o)| n < o)
        {
            return Err(Error::param(
                "wider model needs the same depth and layers at least as wide",
            ));
        }
        let mut wide = AcousticModel::zeros(
            self.input_dim,
            self.context_window,
            hidden_dims,
            self.vocab.clone(),
            self.seed,
        )?;
        let small_dims = self.layer_dims();
        let wide_dims = wide.layer_dims();
        let small_offs = self.layer_offsets();
        let wide_offs = wide.layer_offsets();
        for l in 0..small_dims.len() {
            let (sin, sout) = small_dims[l];
            let (win, wout) = wide_dims[l];
            for o in 0..sout {
                for i in 0..sin {
                    wide.params[wide_offs[l] + o * win + i] = self.params[small_offs[l] + o * sin + i];
                }
                wide.params[wide_offs[l] + win * wout + o] = self.params[small_offs[l] + sin * sout + o];
            }
        }
        Ok(wide)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
