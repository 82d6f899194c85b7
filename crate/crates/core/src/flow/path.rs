//! Straight-line probability path and its constant velocity.

use crate::error::Result;
use crate::flow::check_time;
use crate::numerics::{Real, Tensor};

/// `t·x1 + (1 − (1−σ)t)·x0`.
pub fn ot_interpolate<T: Real>(x0: &Tensor<T>, x1: &Tensor<T>, t: f64, sigma_min: f64) -> Result<Tensor<T>> {
    check_time(t)?;
    let a = T::of_f64(t);
    let b = T::of_f64(1.0 - (1.0 - sigma_min) * t);
    x1.zip_map(x0, |p, q| a * p + b * q)
}

/// `x1 − (1−σ)·x0`.
pub fn target_field<T: Real>(x0: &Tensor<T>, x1: &Tensor<T>, sigma_min: f64) -> Result<Tensor<T>> {
    let c = T::of_f64(1.0 - sigma_min);
    x1.zip_map(x0, |p, q| p - c * q)
}

/// One point on the path together with the regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample<T> {
    pub t: f64,
    pub x_t: Tensor<T>,
    pub target: Tensor<T>,
}

impl<T: Real> PathSample<T> {
    pub fn new(x0: &Tensor<T>, x1: &Tensor<T>, t: f64, sigma_min: f64) -> Result<Self> {
        Ok(Self { t, x_t: ot_interpolate(x0, x1, t, sigma_min)?, target: target_field(x0, x1, sigma_min)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn endpoints_are_exact() {
        let x0 = Tensor::<f64>::from_f64(&[2, 2], &[0.3, -1.7, 2.25, 1e-3]).unwrap();
        let x1 = Tensor::<f64>::from_f64(&[2, 2], &[-0.9, 0.1, 5.5, 7.0]).unwrap();
        assert_eq!(ot_interpolate(&x0, &x1, 0.0, 0.0).unwrap(), x0);
        assert_eq!(ot_interpolate(&x0, &x1, 0.0, 0.3).unwrap(), x0);
        assert_eq!(ot_interpolate(&x0, &x1, 1.0, 0.0).unwrap(), x1);
    }

    #[test]
    fn hand_values() {
        // 0.5·5 + (1 − 0.9·0.5)·2 = 2.5 + 1.1
        assert!((ot_interpolate(&s(2.0), &s(5.0), 0.5, 0.1).unwrap().item() - 3.6).abs() < 1e-12);
        // 5 − 0.9·2
        assert!((target_field(&s(2.0), &s(5.0), 0.1).unwrap().item() - 3.2).abs() < 1e-12);
        assert_eq!(target_field(&s(1.5), &s(1.5), 0.0).unwrap().item(), 0.0);
    }

    #[test]
    fn path_derivative_is_the_field() {
        let x0 = Tensor::<f64>::from_f64(&[3], &[0.4, -2.0, 1.0]).unwrap();
        let x1 = Tensor::<f64>::from_f64(&[3], &[1.1, 0.5, -3.0]).unwrap();
        for sigma in [0.0, 0.1, 0.5] {
            let u = target_field(&x0, &x1, sigma).unwrap();
            for (t, d) in [(0.0, 0.25), (0.3, 0.1), (0.6, 0.4), (0.999, 1e-3)] {
                let a = ot_interpolate(&x0, &x1, t, sigma).unwrap();
                let b = ot_interpolate(&x0, &x1, t + d, sigma).unwrap();
                for i in 0..3 {
                    let slope = (b.data()[i] - a.data()[i]) / d;
                    assert!((slope - u.data()[i]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ot_interpolate(&s(0.0), &s(1.0), 1.5, 0.0).is_err());
        assert!(ot_interpolate(&s(0.0), &Tensor::vector(vec![1.0, 2.0]), 0.5, 0.0).is_err());
        assert!(target_field(&s(0.0), &Tensor::vector(vec![1.0, 2.0]), 0.0).is_err());
    }
}
