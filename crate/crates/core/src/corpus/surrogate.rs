//! Parametric stand-in for a speech-enhancement front end.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::stream;

/// Sinusoidal components per channel in the artifact field.
const ARTIFACT_COMPONENTS: usize = 3;

/// `enhanced = α·clean + (1−α)·noisy + γ·a`, where `a` is a smooth,
/// unit-power artifact field seeded per utterance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateSe {
    pub strength: f64,
    pub artifact: f64,
    pub seed: u64,
}

impl SurrogateSe {
    pub fn new(strength: f64, artifact: f64, seed: u64) -> Result<Self> {
        let se = Self { strength, artifact, seed };
        se.validate()?;
        Ok(se)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::InvalidArgument(format!("SE strength {} outside [0, 1]", self.strength)));
        }
        if !(self.artifact >= 0.0 && self.artifact.is_finite()) {
            return Err(Error::InvalidArgument(format!("SE artifact amplitude {} must be >= 0", self.artifact)));
        }
        Ok(())
    }
}

/// Low-frequency sinusoids along time (well under one cycle per three
/// frames), normalized to unit mean square.
pub fn artifact_field(frames: usize, dims: usize, seed: u64, id: u32) -> Tensor<f64> {
    let mut rng = stream(seed, &[0x4152_5446, id as u64]);
    let mut data = vec![0.0; frames * dims];
    for j in 0..dims {
        for _ in 0..ARTIFACT_COMPONENTS {
            let cycles: f64 = rng.random_range(0.25..1.5);
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let amp: f64 = rng.random_range(0.5..1.0);
            for t in 0..frames {
                let x = 2.0 * PI * cycles * t as f64 / frames.max(1) as f64 + phase;
                data[t * dims + j] += amp * x.sin();
            }
        }
    }
    let ms = data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
    let scale = if ms > 0.0 { 1.0 / ms.sqrt() } else { 0.0 };
    Tensor::new(vec![frames, dims], data.into_iter().map(|v| v * scale).collect()).expect("artifact shape")
}

pub fn surrogate_enhance(utt: &Utterance, se: &SurrogateSe) -> Result<Tensor<f32>> {
    se.validate()?;
    let (t, f) = utt.clean.dims2()?;
    let a = se.strength;
    let mix = utt.clean.zip_map(&utt.noisy, |c, n| (a * c as f64 + (1.0 - a) * n as f64) as f32)?;
    if se.artifact == 0.0 {
        return Ok(mix);
    }
    let art = artifact_field(t, f, se.seed, utt.id);
    let data = mix
        .data()
        .iter()
        .zip(art.data())
        .map(|(&m, &r)| (m as f64 + se.artifact * r) as f32)
        .collect();
    Tensor::new(vec![t, f], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NoiseKind;

    fn utt() -> Utterance {
        Utterance {
            id: 4,
            labels: vec![0],
            clean: Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            noisy: Tensor::matrix(2, 2, vec![2.0, 0.0, 3.5, -1.0]).unwrap(),
            snr_db: 0.0,
            noise_kind: NoiseKind::White,
        }
    }

    #[test]
    fn endpoints_and_midpoint() {
        let u = utt();
        assert_eq!(surrogate_enhance(&u, &SurrogateSe::new(1.0, 0.0, 1).unwrap()).unwrap(), u.clean);
        assert_eq!(surrogate_enhance(&u, &SurrogateSe::new(0.0, 0.0, 1).unwrap()).unwrap(), u.noisy);
        let mid = surrogate_enhance(&u, &SurrogateSe::new(0.5, 0.0, 1).unwrap()).unwrap();
        assert_eq!(mid.data(), &[1.5, 1.0, 3.25, 1.5]);
    }

    #[test]
    fn strength_is_range_checked() {
        assert!(SurrogateSe::new(1.2, 0.0, 0).is_err());
        assert!(SurrogateSe::new(-0.1, 0.0, 0).is_err());
        assert!(SurrogateSe::new(0.5, -1.0, 0).is_err());
    }

    #[test]
    fn artifact_has_unit_power_and_is_seeded() {
        let a = artifact_field(40, 8, 7, 3);
        assert!((a.mean_square() - 1.0).abs() < 1e-12);
        assert_eq!(a, artifact_field(40, 8, 7, 3));
        assert_ne!(a, artifact_field(40, 8, 7, 4));
    }

    #[test]
    fn distance_to_clean_shrinks_with_strength() {
        let u = utt();
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let se = SurrogateSe::new(k as f64 / 10.0, 0.0, 0).unwrap();
            let d = surrogate_enhance(&u, &se).unwrap().sq_dist(&u.clean).unwrap();
            assert!(d <= last);
            last = d;
        }
    }
}
