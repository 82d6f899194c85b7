//! Noise fields and exact-SNR mixing.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::render::{render_features, sample_transcript, Prototypes};
use crate::corpus::{CorpusSpec, NoiseKind};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::Rng;

/// Streams summed into one babble field.
pub const BABBLE_STREAMS: usize = 4;

/// Gain `g` such that `10·log10(p_clean / (g²·p_noise)) = snr_db`.
pub fn snr_gain(p_clean: f64, p_noise: f64, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("snr_db must be finite, got {snr_db}")));
    }
    if !(p_clean > 0.0) {
        return Err(Error::InvalidArgument("clean signal has zero power".into()));
    }
    if !(p_noise > 0.0) {
        return Err(Error::InvalidArgument("noise field has zero power".into()));
    }
    Ok((p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// SNR of `clean` against the residual `noisy - clean`, over the full utterance.
pub fn measure_snr_db(clean: &Tensor<f32>, noisy: &Tensor<f32>) -> Result<f64> {
    clean.expect_same_shape(noisy, "measure_snr_db")?;
    let p_clean = clean.mean_square();
    let p_noise = clean.sq_dist(noisy)? / clean.len() as f64;
    if !(p_clean > 0.0 && p_noise > 0.0) {
        return Err(Error::InvalidArgument("SNR undefined for zero-power signal or residual".into()));
    }
    Ok(10.0 * (p_clean / p_noise).log10())
}

/// A `[frames, F]` noise field of the given kind.
pub fn noise_field(
    kind: NoiseKind,
    frames: usize,
    spec: &CorpusSpec,
    protos: &Prototypes,
    rng: &mut Rng,
) -> Tensor<f64> {
    let f = spec.feature_dim;
    let data: Vec<f64> = match kind {
        NoiseKind::White => (0..frames * f).map(|_| StandardNormal.sample(rng)).collect(),
        NoiseKind::Babble => {
            let mut acc = vec![0.0; frames * f];
            for _ in 0..BABBLE_STREAMS {
                let labels = sample_transcript(spec, rng);
                let s = render_features(&labels, spec, protos, rng);
                let len = s.shape()[0];
                let shift = rng.random_range(0..len);
                for t in 0..frames {
                    let src = s.row((t + shift) % len);
                    for (a, &v) in acc[t * f..(t + 1) * f].iter_mut().zip(src) {
                        *a += v as f64;
                    }
                }
            }
            acc
        }
    };
    Tensor::new(vec![frames, f], data).expect("noise shape")
}

/// `clean + g·noise` with `g` from [`snr_gain`]. Returns the stored noisy
/// features and the SNR re-measured on the stored values.
pub fn mix_at_snr(clean: &Tensor<f32>, noise: &Tensor<f64>, snr_db: f64) -> Result<(Tensor<f32>, f64)> {
    if clean.shape() != noise.shape() {
        return Err(Error::Shape(format!("mix: clean {:?} vs noise {:?}", clean.shape(), noise.shape())));
    }
    let g = snr_gain(clean.mean_square(), noise.mean_square(), snr_db)?;
    let data = clean.data().iter().zip(noise.data()).map(|(&c, &n)| (c as f64 + g * n) as f32).collect();
    let noisy = Tensor::new(clean.shape().to_vec(), data)?;
    let realized = measure_snr_db(clean, &noisy)?;
    Ok((noisy, realized))
}

pub fn mix_noise(
    clean: &Tensor<f32>,
    kind: NoiseKind,
    snr_db: f64,
    spec: &CorpusSpec,
    protos: &Prototypes,
    rng: &mut Rng,
) -> Result<(Tensor<f32>, f64)> {
    let noise = noise_field(kind, clean.shape()[0], spec, protos, rng);
    mix_at_snr(clean, &noise, snr_db)
}
