//! CTC likelihood by the log-space forward–backward recursion.
//!
//! The target `Y` is extended with blanks to `l' = (∅, y1, ∅, y2, …, ∅)`.
//! Forward variables `α_t(s)` and backward variables `β_t(s)` both include
//! the emission at frame `t`, so `α_t(s) + β_t(s) − logp_t(l'_s)` is the log
//! mass of all paths through state `s` at frame `t`.

use crate::error::{Error, Result};
use crate::numerics::kernels::log_add;
use crate::numerics::{Real, Tensor, Var};

/// Frames needed to emit `target`: one per label plus a separating blank
/// between each pair of equal neighbours.
pub fn min_frames(target: &[u16]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn validate<T: Real>(logpost: &Tensor<T>, target: &[u16]) -> Result<(usize, usize)> {
    let (frames, classes) = logpost.dims2()?;
    if classes < 2 {
        return Err(Error::Shape(format!("ctc needs at least one symbol plus blank, got {classes} classes")));
    }
    let blank = classes - 1;
    if let Some(&bad) = target.iter().find(|&&y| y as usize >= blank) {
        return Err(Error::InvalidArgument(format!("target symbol {bad} is not below the blank id {blank}")));
    }
    let required = min_frames(target);
    if frames < required {
        return Err(Error::TargetTooLong { target_len: target.len(), required, frames });
    }
    logpost.check_finite("ctc log-posteriors")?;
    Ok((frames, classes))
}

struct Lattice {
    ext: Vec<usize>,
    alpha: Vec<f64>,
    log_prob: f64,
}

fn extended(target: &[u16], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &y in target {
        ext.push(y as usize);
        ext.push(blank);
    }
    ext
}

fn forward<T: Real>(lp: &[T], frames: usize, classes: usize, target: &[u16]) -> Lattice {
    let blank = classes - 1;
    let ext = extended(target, blank);
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    let at = |t: usize, k: usize| lp[t * classes + k].as_f64();
    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = at(0, ext[0]);
    if s_len > 1 {
        alpha[1] = at(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = if acc == ninf { ninf } else { acc + at(t, ext[s]) };
        }
    }
    let last = &alpha[(frames - 1) * s_len..];
    let log_prob = if s_len > 1 { log_add(last[s_len - 1], last[s_len - 2]) } else { last[0] };
    Lattice { ext, alpha, log_prob }
}

/// `ln P_CTC(target | logpost)` for a `[T, V+1]` matrix of frame
/// log-probabilities whose last column is the blank.
pub fn ctc_log_prob<T: Real>(logpost: &Tensor<T>, target: &[u16]) -> Result<f64> {
    let (frames, classes) = validate(logpost, target)?;
    Ok(forward(logpost.data(), frames, classes, target).log_prob)
}

/// Negative log-likelihood and its gradient with respect to every entry of `logpost`.
pub fn ctc_loss_and_grad<T: Real>(logpost: &Tensor<T>, target: &[u16]) -> Result<(f64, Tensor<T>)> {
    let (frames, classes) = validate(logpost, target)?;
    let lp = logpost.data();
    let Lattice { ext, alpha, log_prob } = forward(lp, frames, classes, target);
    if !log_prob.is_finite() {
        return Err(Error::NonFinite { op: "ctc forward".into(), index: 0 });
    }
    let blank = classes - 1;
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    let at = |t: usize, k: usize| lp[t * classes + k].as_f64();

    let mut beta = vec![ninf; frames * s_len];
    let tl = frames - 1;
    beta[tl * s_len + s_len - 1] = at(tl, ext[s_len - 1]);
    if s_len > 1 {
        beta[tl * s_len + s_len - 2] = at(tl, ext[s_len - 2]);
    }
    for t in (0..tl).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = log_add(acc, next[s + 1]);
            }
            if s + 2 < s_len && ext[s] != blank && ext[s] != ext[s + 2] {
                acc = log_add(acc, next[s + 2]);
            }
            beta[t * s_len + s] = if acc == ninf { ninf } else { acc + at(t, ext[s]) };
        }
    }

    let mut occupancy = vec![ninf; frames * classes];
    for t in 0..frames {
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a == ninf || b == ninf {
                continue;
            }
            let slot = &mut occupancy[t * classes + ext[s]];
            *slot = log_add(*slot, a + b);
        }
    }
    let grad = occupancy
        .iter()
        .enumerate()
        .map(|(i, &occ)| {
            if occ == ninf {
                T::zero()
            } else {
                T::of_f64(-(occ - lp[i].as_f64() - log_prob).exp())
            }
        })
        .collect();
    Ok((-log_prob, Tensor::new(vec![frames, classes], grad)?))
}

/// Records the CTC loss of `logpost` (a `[T, V+1]` log-softmax output) in its graph.
pub fn ctc_loss<'g, T: Real>(logpost: Var<'g, T>, target: &[u16]) -> Result<Var<'g, T>> {
    let (loss, grad) = ctc_loss_and_grad(&logpost.value(), target)?;
    Ok(logpost.precomputed_scalar("ctc_loss", T::of_f64(loss), grad))
}
