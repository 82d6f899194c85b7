#![allow(dead_code)]

use std::sync::OnceLock;

use latentfm::numerics::{Bound, ParamSet, Real, Tensor, Var};
use latentfm::refiner::{Refiner, RefinerConfig};
use latentfm::flow::VectorField;
use latentfm::rng::Rng;
use rand::Rng as _;

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Tensor<f64> {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn random_f32(rng: &mut Rng, rows: usize, cols: usize, scale: f32) -> Tensor<f32> {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn log_softmax_rows(t: &Tensor<f64>) -> Tensor<f64> {
    let (r, c) = t.dims2().unwrap();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = t.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Tensor::new(vec![r, c], out).unwrap()
}

/// Collapse a frame path: drop repeats, then blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<u16> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &k in path {
        if k != prev && k != blank {
            out.push(k as u16);
        }
        prev = k;
    }
    out
}

/// Sum of path probabilities over all `classes^frames` frame paths.
pub fn brute_force_prob(lp: &Tensor<f64>, target: &[u16]) -> f64 {
    let (frames, classes) = lp.dims2().unwrap();
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    loop {
        if collapse(&path, classes - 1) == target {
            total += path.iter().enumerate().map(|(t, &k)| lp.row(t)[k]).sum::<f64>().exp();
        }
        let mut i = 0;
        while i < frames {
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
        if i == frames {
            return total;
        }
    }
}

/// Every label sequence of length 0..=max_len over `vocab` symbols.
pub fn all_targets(vocab: u16, max_len: usize) -> Vec<Vec<u16>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for a in 0..vocab {
                let mut q: Vec<u16> = p.clone();
                q.push(a);
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Ignores its inputs and returns a fixed tensor.
pub struct ConstantField<T: Real>(pub Tensor<T>);

impl<T: Real> VectorField<T> for ConstantField<T> {
    fn params(&self) -> &ParamSet<T> {
        static EMPTY_F32: OnceLock<ParamSet<f32>> = OnceLock::new();
        static EMPTY_F64: OnceLock<ParamSet<f64>> = OnceLock::new();
        let any: &dyn std::any::Any = if std::any::TypeId::of::<T>() == std::any::TypeId::of::<f32>() {
            EMPTY_F32.get_or_init(ParamSet::new)
        } else {
            EMPTY_F64.get_or_init(ParamSet::new)
        };
        any.downcast_ref::<ParamSet<T>>().unwrap()
    }

    fn velocity<'g>(&self, _: &Bound<'g, '_, T>, x: Var<'g, T>, _: Var<'g, T>, _: f64) -> latentfm::Result<Var<'g, T>> {
        Ok(x.graph().constant(self.0.clone()))
    }
}

pub fn tiny_refiner_config(latent_dim: usize) -> RefinerConfig {
    RefinerConfig { depth: 1, base_channels: 4, mults: vec![1], time_dim: 4, groups: 2, latent_dim }
}

/// A small refiner with every parameter perturbed away from its initial value,
/// so that no gradient path is trivially zero.
pub fn perturbed_refiner(config: RefinerConfig, seed: u64, rng: &mut Rng) -> Refiner<f64> {
    let mut m = Refiner::<f64>::init(config, seed).unwrap();
    for t in m.params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    m
}
