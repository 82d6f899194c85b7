//! Conditional flow-matching regression loss.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::flow::pairs::LatentPair;
use crate::flow::path::PathSample;
use crate::flow::{FlowConfig, VectorField};
use crate::numerics::{sum_grads, Bound, Real, Tensor, Var};
use crate::rng::Rng;

/// One `t ~ U[0, 1]` per pair.
pub fn draw_times(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()
}

/// `mean((v(x_t, x0, t) − u)²)` over the coordinates of one pair.
pub fn cfm_sample_loss<'g, T: Real, M: VectorField<T> + ?Sized>(
    model: &M,
    p: &Bound<'g, '_, T>,
    x0: &Tensor<T>,
    x1: &Tensor<T>,
    t: f64,
    config: &FlowConfig,
) -> Result<Var<'g, T>> {
    if x0.shape() != x1.shape() {
        return Err(Error::Shape(format!("unpaired latents {:?} and {:?}", x0.shape(), x1.shape())));
    }
    let s = PathSample::new(x0, x1, t, config.sigma_min)?;
    let g = p.graph();
    let v = model.velocity(p, g.constant(s.x_t), g.constant(x0.clone()), t)?;
    if v.shape() != x0.shape() {
        return Err(Error::Shape(format!("field output {:?} for latent {:?}", v.shape(), x0.shape())));
    }
    Ok(v.sub(g.constant(s.target)).square().mean())
}

fn pair_tensors<T: Real>(pair: &LatentPair) -> (Tensor<T>, Tensor<T>) {
    (pair.source.cast(), pair.clean.cast())
}

/// Batch loss (mean over pairs of the per-pair coordinate mean) and its
/// parameter gradients. `times[i]` is the path time of `pairs[i]`.
pub fn cfm_loss_and_grads<T: Real, M: VectorField<T>>(
    model: &M,
    pairs: &[&LatentPair],
    times: &[f64],
    config: &FlowConfig,
) -> Result<(f64, Vec<Tensor<T>>)> {
    if pairs.is_empty() || pairs.len() != times.len() {
        return Err(Error::InvalidArgument(format!("{} pairs with {} times", pairs.len(), times.len())));
    }
    let scale = 1.0 / pairs.len() as f64;
    let items: Vec<(&LatentPair, f64)> = pairs.iter().copied().zip(times.iter().copied()).collect();
    let parts = par_map(&items, |&(pair, t)| -> Result<(f64, Vec<Tensor<T>>)> {
        let g = crate::numerics::Graph::new();
        let p = model.params().bind(&g, true);
        let (x0, x1) = pair_tensors::<T>(pair);
        let loss = cfm_sample_loss(model, &p, &x0, &x1, t, config)?.scale(scale);
        g.check()?;
        let grads = g.backward(loss)?;
        Ok((loss.value().item().as_f64(), p.grads(&grads)))
    });
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(parts.len());
    for part in parts {
        let (l, gr) = part?;
        total += l;
        grads.push(gr);
    }
    Ok((total, sum_grads(grads).expect("non-empty batch")))
}

/// Batch loss value with fresh time draws from `rng`.
pub fn cfm_loss<T: Real, M: VectorField<T>>(
    model: &M,
    pairs: &[&LatentPair],
    rng: &mut Rng,
    config: &FlowConfig,
) -> Result<f64> {
    let times = draw_times(rng, pairs.len());
    cfm_loss_at(model, pairs, &times, config)
}

/// Batch loss value at fixed times.
pub fn cfm_loss_at<T: Real, M: VectorField<T>>(
    model: &M,
    pairs: &[&LatentPair],
    times: &[f64],
    config: &FlowConfig,
) -> Result<f64> {
    if pairs.is_empty() || pairs.len() != times.len() {
        return Err(Error::InvalidArgument(format!("{} pairs with {} times", pairs.len(), times.len())));
    }
    let items: Vec<(&LatentPair, f64)> = pairs.iter().copied().zip(times.iter().copied()).collect();
    let losses = par_map(&items, |&(pair, t)| -> Result<f64> {
        let g = crate::numerics::Graph::new();
        let p = model.params().bind(&g, false);
        let (x0, x1) = pair_tensors::<T>(pair);
        let l = cfm_sample_loss(model, &p, &x0, &x1, t, config)?;
        g.check()?;
        Ok(l.value().item().as_f64())
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / pairs.len() as f64)
}
