//! CTC primitives: path collapse, forward-backward loss and gradient, greedy
//! decoding. All probability arithmetic is in the natural-log domain.

mod grid;
mod transcript;

pub use grid::{load_grids, save_grids, PosteriorGrid};
pub(crate) use grid::log_softmax_in_place;
pub use transcript::Transcript;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Maximum `|logsumexp(row)|` accepted for a normalized grid row.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// `log(exp(a) + exp(b))` without overflow; `-inf` is the identity.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Merges consecutive duplicates, then drops blanks.
pub fn collapse(path: &[usize], vocab: &Vocabulary) -> Result<Transcript> {
    if let Some(&bad) = path.iter().find(|&&s| s >= vocab.len()) {
        return Err(Error::param(format!(
            "path symbol {bad} out of range for vocabulary of {}",
            vocab.len()
        )));
    }
    Transcript::from_tokens(collapse_indices(path, vocab.blank_index()), vocab)
}

pub(crate) fn collapse_indices(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

pub fn greedy_decode(grid: &PosteriorGrid, vocab: &Vocabulary) -> Result<Transcript> {
    check_symbols(grid, vocab)?;
    collapse(&grid.argmax_path(), vocab)
}

fn check_symbols(grid: &PosteriorGrid, vocab: &Vocabulary) -> Result<()> {
    if grid.num_symbols() != vocab.len() {
        return Err(Error::param(format!(
            "grid has {} symbols, vocabulary has {}",
            grid.num_symbols(),
            vocab.len()
        )));
    }
    Ok(())
}

/// Forward-backward lattice over the blank-extended target.
struct Lattice {
    /// Extended label sequence `blank, y1, blank, y2, ..., blank`.
    ext: Vec<usize>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_likelihood: f64,
}

fn check_target(grid: &PosteriorGrid, target: &Transcript, blank: usize) -> Result<()> {
    let v = grid.num_symbols();
    if blank >= v {
        return Err(Error::param(format!("blank {blank} out of range for {v} symbols")));
    }
    if let Some(&bad) = target.tokens().iter().find(|&&s| s >= v || s == blank) {
        return Err(Error::param(format!("target symbol {bad} invalid for grid")));
    }
    let needed = target.min_frames();
    if needed > grid.num_frames() {
        return Err(Error::InfeasibleTarget {
            label_len: target.len(),
            repeats: target.repeats(),
            needed,
            frames: grid.num_frames(),
        });
    }
    Ok(())
}

fn lattice(grid: &PosteriorGrid, target: &Transcript, blank: usize, with_beta: bool) -> Result<Lattice> {
    check_target(grid, target, blank)?;
    let t_len = grid.num_frames();
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &s in target.tokens() {
        ext.push(s);
        ext.push(blank);
    }
    let s_len = ext.len();
    // A transition s-2 -> s skips a blank; it is only legal between distinct labels.
    let can_skip: Vec<bool> = (0..s_len)
        .map(|s| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
        .collect();
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = grid.log_prob(0, ext[0]);
    if s_len > 1 {
        alpha[1] = grid.log_prob(0, ext[1]);
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip[s] {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = if a == ninf { ninf } else { a + grid.log_prob(t, ext[s]) };
        }
    }
    let last = &alpha[(t_len - 1) * s_len..];
    let log_likelihood = if s_len > 1 {
        log_add(last[s_len - 1], last[s_len - 2])
    } else {
        last[0]
    };

    let mut beta = Vec::new();
    if with_beta {
        beta = vec![ninf; t_len * s_len];
        let base = (t_len - 1) * s_len;
        beta[base + s_len - 1] = grid.log_prob(t_len - 1, ext[s_len - 1]);
        if s_len > 1 {
            beta[base + s_len - 2] = grid.log_prob(t_len - 1, ext[s_len - 2]);
        }
        for t in (0..t_len - 1).rev() {
            let (cur, next) = beta.split_at_mut((t + 1) * s_len);
            let cur = &mut cur[t * s_len..];
            for s in 0..s_len {
                let mut b = next[s];
                if s + 1 < s_len {
                    b = log_add(b, next[s + 1]);
                }
                if s + 2 < s_len && can_skip[s + 2] {
                    b = log_add(b, next[s + 2]);
                }
                cur[s] = if b == ninf { ninf } else { b + grid.log_prob(t, ext[s]) };
            }
        }
    }
    Ok(Lattice {
        ext,
        alpha,
        beta,
        log_likelihood,
    })
}

/// Negative log-likelihood of `target` summed over all alignments.
pub fn ctc_loss(grid: &PosteriorGrid, target: &Transcript, blank: usize) -> Result<f64> {
    let lat = lattice(grid, target, blank, false)?;
    if lat.log_likelihood == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihood);
    }
    Ok(-lat.log_likelihood)
}

/// Gradient of [`ctc_loss`] with respect to the pre-softmax logits whose
/// log-softmax produced `grid`. Row-major `T x V`.
pub fn ctc_grad(grid: &PosteriorGrid, target: &Transcript, blank: usize) -> Result<Vec<f64>> {
    ctc_loss_and_grad(grid, target, blank).map(|(_, g)| g)
}

pub fn ctc_loss_and_grad(
    grid: &PosteriorGrid,
    target: &Transcript,
    blank: usize,
) -> Result<(f64, Vec<f64>)> {
    let lat = lattice(grid, target, blank, true)?;
    let ll = lat.log_likelihood;
    if ll == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihood);
    }
    let (t_len, v_len, s_len) = (grid.num_frames(), grid.num_symbols(), lat.ext.len());
    let mut grad = vec![0.0; t_len * v_len];
    let mut occupancy = vec![f64::NEG_INFINITY; v_len];
    for t in 0..t_len {
        occupancy.fill(f64::NEG_INFINITY);
        for s in 0..s_len {
            let a = lat.alpha[t * s_len + s];
            let b = lat.beta[t * s_len + s];
            if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                continue;
            }
            // alpha and beta both include the emission at t.
            let g = a + b - grid.log_prob(t, lat.ext[s]);
            let v = lat.ext[s];
            occupancy[v] = log_add(occupancy[v], g);
        }
        let row = grid.row(t);
        for v in 0..v_len {
            grad[t * v_len + v] = row[v].exp() - (occupancy[v] - ll).exp();
        }
    }
    Ok((-ll, grad))
}
