//! Fixed-step explicit Euler integration of a learned field.

use crate::asr::{LatentSequence, Provenance};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, VectorField};
use crate::numerics::{Real, Tensor};

/// Integrates `dx/dt = v(x, cond, t)` from `t = 0` to `t = 1` in
/// `config.steps` equal steps.
pub fn euler_integrate<T: Real, M: VectorField<T> + ?Sized>(
    model: &M,
    x0: &Tensor<T>,
    condition: &Tensor<T>,
    config: &FlowConfig,
) -> Result<Tensor<T>> {
    config.validate()?;
    x0.expect_same_shape(condition, "euler_integrate")?;
    let n = config.steps as f64;
    let mut sum = vec![0.0f64; x0.len()];
    let mut x = x0.clone();
    for k in 0..config.steps {
        let v = model.eval(&x, condition, k as f64 / n)?;
        x.expect_same_shape(&v, "euler_integrate field")?;
        // x_{k+1} = x_k + v_k / N, written as x_0 + (Σ v_j) / N with the sum kept in f64
        for (s, b) in sum.iter_mut().zip(v.data()) {
            *s += b.as_f64();
        }
        for ((o, a), s) in x.data_mut().iter_mut().zip(x0.data()).zip(&sum) {
            *o = T::of_f64(a.as_f64() + s / n);
        }
        if let Some(i) = x.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: format!("euler step {k}"), index: i });
        }
    }
    Ok(x)
}

/// Refined latent: integrate from `z` while conditioning on `z`.
pub fn refine<T: Real, M: VectorField<T> + ?Sized>(
    z: &LatentSequence<T>,
    model: &M,
    config: &FlowConfig,
) -> Result<LatentSequence<T>> {
    if let Some(d) = model.latent_dim() {
        if d != z.dim() {
            return Err(Error::Shape(format!("refiner expects latent dim {d}, got {}", z.dim())));
        }
    }
    let out = euler_integrate(model, &z.data, &z.data, config)?;
    LatentSequence::new(out, Provenance::Refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::testing::{ConstantField, LinearField};
    use crate::flow::target_field;

    fn latent(v: &[f64], d: usize) -> Tensor<f64> {
        Tensor::from_f64(&[v.len() / d, d], v).unwrap()
    }

    #[test]
    fn zero_field_returns_start() {
        let x0 = latent(&[0.1, -2.0, 3.5, 0.0], 2);
        let zero = ConstantField::new(Tensor::zeros(&[2, 2]));
        for n in [1, 3, 10] {
            let cfg = FlowConfig { sigma_min: 0.0, steps: n };
            assert_eq!(euler_integrate(&zero, &x0, &x0, &cfg).unwrap(), x0);
        }
    }

    #[test]
    fn constant_field_is_exact() {
        // dyadic values keep every partial sum exact
        let x0 = latent(&[0.5, -1.25, 2.0, 0.75], 2);
        let c = latent(&[1.5, 0.25, -3.0, 1.0], 2);
        let want = x0.add(&c).unwrap();
        for n in [1, 2, 4, 8] {
            let cfg = FlowConfig { sigma_min: 0.0, steps: n };
            assert_eq!(euler_integrate(&ConstantField::new(c.clone()), &x0, &x0, &cfg).unwrap(), want);
        }
        let x0 = x0.cast::<f32>();
        let c = Tensor::<f32>::from_f64(&[2, 2], &[0.1, -0.7, 1.0 / 3.0, 2.9]).unwrap();
        let want = x0.add(&c).unwrap();
        for n in [1, 3, 10] {
            let cfg = FlowConfig { sigma_min: 0.0, steps: n };
            assert_eq!(euler_integrate(&ConstantField::new(c.clone()), &x0, &x0, &cfg).unwrap(), want);
        }
    }

    #[test]
    fn identity_field_two_steps() {
        let one = latent(&[1.0], 1);
        let v = LinearField::<f64>::new(1.0, 0.0);
        let cfg = FlowConfig { sigma_min: 0.0, steps: 2 };
        assert_eq!(euler_integrate(&v, &one, &one, &cfg).unwrap().item(), 2.25);
    }

    #[test]
    fn oracle_refine_lands_on_target() {
        let zn = latent(&[0.3, -1.0, 2.0, 0.5, 0.0, 1.0], 3);
        let zc = latent(&[1.0, 1.0, -1.0, 0.0, 2.0, 0.25], 3);
        for sigma in [0.0, 0.2] {
            let u = target_field(&zn, &zc, sigma).unwrap();
            for n in [1, 3, 10] {
                let cfg = FlowConfig { sigma_min: sigma, steps: n };
                let z = LatentSequence::new(zn.clone(), Provenance::Noisy).unwrap();
                let out = refine(&z, &ConstantField::new(u.clone()), &cfg).unwrap();
                assert_eq!(out.provenance, Provenance::Refined);
                let want = zc.zip_map(&zn, |c, n| c + sigma * n).unwrap();
                assert!(out.data.sq_dist(&want).unwrap().sqrt() < 1e-12);
                assert_eq!(z.data, zn);
            }
        }
    }

    #[test]
    fn non_finite_names_the_step() {
        let big = latent(&[f64::MAX], 1);
        let v = ConstantField::new(big.clone());
        let cfg = FlowConfig { sigma_min: 0.0, steps: 3 };
        match euler_integrate(&v, &big, &big, &cfg) {
            Err(Error::NonFinite { op, .. }) => assert_eq!(op, "euler step 0"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
