//! Optimal-transport flow matching between degraded and clean latents.
//!
//! The path from `x0` (degraded latent) to `x1` (clean latent) is
//! `x_t = t·x1 + (1 − (1−σ)t)·x0`, whose velocity `u = x1 − (1−σ)·x0` does
//! not depend on `t`. A vector field `v(x_t, cond, t)` is regressed onto `u`
//! and integrated with fixed-step Euler at inference.

pub mod loss;
pub mod pairs;
pub mod path;
pub mod sampler;

use crate::error::{Error, Result};
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::{Bound, Graph, ParamSet, Real, Tensor, Var};

pub use loss::{cfm_loss, cfm_loss_and_grads, cfm_loss_at, cfm_sample_loss, draw_times};
pub use pairs::{extract_latent_pairs, mean_pair_distance, LatentPair, PairVariant};
pub use path::{ot_interpolate, target_field, PathSample};
pub use sampler::{euler_integrate, refine};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub sigma_min: f64,
    pub steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { sigma_min: 0.0, steps: 3 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma_min) {
            return Err(Error::Config(format!("flow: sigma_min {} outside [0, 1)", self.sigma_min)));
        }
        if self.steps < 1 {
            return Err(Error::Config("flow: steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn read_kv(&mut self, doc: &KvDoc, prefix: &str) -> Result<()> {
        doc.read(&format!("{prefix}sigma_min"), &mut self.sigma_min)?;
        doc.read(&format!("{prefix}steps"), &mut self.steps)?;
        Ok(())
    }

    pub fn write_kv(&self, w: &mut KvWriter, prefix: &str) {
        w.put(&format!("{prefix}sigma_min"), self.sigma_min);
        w.put(&format!("{prefix}steps"), self.steps);
    }
}

/// A learnable field `v(x, cond, t)` over `[T, d]` latents.
pub trait VectorField<T: Real>: Sync {
    fn params(&self) -> &ParamSet<T>;

    /// Latent width the field accepts, when fixed.
    fn latent_dim(&self) -> Option<usize> {
        None
    }

    /// Records the field in the graph that `p` is bound to.
    fn velocity<'g>(&self, p: &Bound<'g, '_, T>, x: Var<'g, T>, cond: Var<'g, T>, t: f64) -> Result<Var<'g, T>>;

    /// Field value with parameters held constant.
    fn eval(&self, x: &Tensor<T>, cond: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
        let g = Graph::new();
        let p = self.params().bind(&g, false);
        let v = self.velocity(&p, g.constant(x.clone()), g.constant(cond.clone()), t)?;
        g.check()?;
        Ok(v.value())
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")))
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Ignores its inputs and emits a fixed tensor.
    pub struct ConstantField<T: Real> {
        pub value: Tensor<T>,
        pub params: ParamSet<T>,
    }

    impl<T: Real> ConstantField<T> {
        pub fn new(value: Tensor<T>) -> Self {
            Self { value, params: ParamSet::new() }
        }
    }

    impl<T: Real> VectorField<T> for ConstantField<T> {
        fn params(&self) -> &ParamSet<T> {
            &self.params
        }
        fn velocity<'g>(&self, _: &Bound<'g, '_, T>, x: Var<'g, T>, _: Var<'g, T>, _: f64) -> Result<Var<'g, T>> {
            Ok(x.graph().constant(self.value.clone()))
        }
    }

    /// `v = a·x + b·cond` with scalar parameters `a`, `b`.
    pub struct LinearField<T: Real> {
        pub params: ParamSet<T>,
    }

    impl<T: Real> LinearField<T> {
        pub fn new(a: f64, b: f64) -> Self {
            let mut params = ParamSet::new();
            params.insert("a", Tensor::from_f64(&[1, 1], &[a]).unwrap());
            params.insert("b", Tensor::from_f64(&[1, 1], &[b]).unwrap());
            Self { params }
        }
    }

    impl<T: Real> VectorField<T> for LinearField<T> {
        fn params(&self) -> &ParamSet<T> {
            &self.params
        }
        fn velocity<'g>(&self, p: &Bound<'g, '_, T>, x: Var<'g, T>, cond: Var<'g, T>, _: f64) -> Result<Var<'g, T>> {
            Ok(x.matmul(p.var("a")).add(cond.matmul(p.var("b"))))
        }
    }
}
