//! Vector-field network for latent refinement: a 1-D U-Net over `[T, d]`
//! latent sequences conditioned on the degraded latent and the path time.

pub mod train;
pub mod unet;

use crate::error::{Error, Result};
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::{Real, Tensor};

pub use train::{train_refiner, RefinerEpoch, RefinerTrainConfig, RefinerTrained};
pub use unet::{reflect_index, unet_forward, Refiner};

#[derive(Clone, Debug, PartialEq)]
pub struct RefinerConfig {
    /// Number of stride-2 down (and up) levels.
    pub depth: usize,
    pub base_channels: usize,
    /// Channel multiplier per level; length equals `depth`.
    pub mults: Vec<usize>,
    pub time_dim: usize,
    pub groups: usize,
    /// Must equal the recognizer's hidden width.
    pub latent_dim: usize,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self::desk_scale(32)
    }
}

impl RefinerConfig {
    pub fn desk_scale(latent_dim: usize) -> Self {
        Self { depth: 2, base_channels: 16, mults: vec![1, 2], time_dim: 32, groups: 4, latent_dim }
    }

    pub fn large_scale(latent_dim: usize) -> Self {
        Self { depth: 4, base_channels: 128, mults: vec![1, 2, 2, 2], time_dim: 128, groups: 8, latent_dim }
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels * self.mults[level]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("refiner: {m}")));
        if self.depth < 1 || self.mults.len() != self.depth {
            return bad(format!("depth {} needs that many channel multipliers, got {}", self.depth, self.mults.len()));
        }
        if self.base_channels < 1 || self.latent_dim < 1 || self.groups < 1 || self.mults.contains(&0) {
            return bad("dimensions must be positive".into());
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 {
            return bad(format!("time_dim {} must be even and >= 2", self.time_dim));
        }
        if let Some(l) = (0..self.depth).find(|&l| self.channels(l) % self.groups != 0) {
            return bad(format!("{} channels at level {l} not divisible by {} groups", self.channels(l), self.groups));
        }
        Ok(())
    }

    pub fn read_kv(&mut self, doc: &KvDoc, prefix: &str) -> Result<()> {
        let k = |s: &str| format!("{prefix}{s}");
        doc.read(&k("depth"), &mut self.depth)?;
        doc.read(&k("base_channels"), &mut self.base_channels)?;
        doc.read_list(&k("mults"), &mut self.mults)?;
        doc.read(&k("time_dim"), &mut self.time_dim)?;
        doc.read(&k("groups"), &mut self.groups)?;
        doc.read(&k("latent_dim"), &mut self.latent_dim)?;
        Ok(())
    }

    pub fn write_kv(&self, w: &mut KvWriter, prefix: &str) {
        let k = |s: &str| format!("{prefix}{s}");
        w.put(&k("depth"), self.depth);
        w.put(&k("base_channels"), self.base_channels);
        w.put_list(&k("mults"), &self.mults);
        w.put(&k("time_dim"), self.time_dim);
        w.put(&k("groups"), self.groups);
        w.put(&k("latent_dim"), self.latent_dim);
    }
}

/// Largest angular frequency of the time embedding.
pub const MAX_FREQUENCY: f64 = 50.0;

/// `[sin(ω_k t) …, cos(ω_k t) …]` as a `[1, dim]` row, with `dim/2`
/// frequencies log-spaced from 1 to [`MAX_FREQUENCY`].
pub fn sinusoidal_embedding<T: Real>(t: f64, dim: usize) -> Result<Tensor<T>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!("time embedding dim {dim} must be even and positive")));
    }
    let half = dim / 2;
    let freq = |k: usize| if half == 1 { 1.0 } else { MAX_FREQUENCY.powf(k as f64 / (half - 1) as f64) };
    let mut data = Vec::with_capacity(dim);
    data.extend((0..half).map(|k| T::of_f64((freq(k) * t).sin())));
    data.extend((0..half).map(|k| T::of_f64((freq(k) * t).cos())));
    Tensor::new(vec![1, dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_at_zero() {
        let e = sinusoidal_embedding::<f64>(0.0, 8).unwrap();
        assert_eq!(&e.data()[..4], &[0.0; 4]);
        assert_eq!(&e.data()[4..], &[1.0; 4]);
        assert!(sinusoidal_embedding::<f64>(0.5, 7).is_err());
    }

    #[test]
    fn embedding_distinct_and_continuous() {
        let dim = RefinerConfig::default().time_dim;
        let e: Vec<Tensor<f64>> = [0.0, 0.5, 1.0].iter().map(|&t| sinusoidal_embedding(t, dim).unwrap()).collect();
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(e[i].sq_dist(&e[j]).unwrap() > 1e-6);
            }
        }
        for k in 0..=100 {
            let t = k as f64 / 100.0 * (1.0 - 1e-4);
            let a = sinusoidal_embedding::<f64>(t, dim).unwrap();
            let b = sinusoidal_embedding::<f64>(t + 1e-4, dim).unwrap();
            assert!(a.sq_dist(&b).unwrap().sqrt() <= 1e-2);
        }
    }

    #[test]
    fn config_checks_and_round_trip() {
        RefinerConfig::default().validate().unwrap();
        RefinerConfig::large_scale(256).validate().unwrap();
        assert!(RefinerConfig { mults: vec![1], ..RefinerConfig::default() }.validate().is_err());
        assert!(RefinerConfig { time_dim: 7, ..RefinerConfig::default() }.validate().is_err());
        assert!(RefinerConfig { groups: 5, ..RefinerConfig::default() }.validate().is_err());
        let c = RefinerConfig::large_scale(64);
        let mut w = KvWriter::new();
        c.write_kv(&mut w, "refiner.");
        let doc = KvDoc::parse(&w.finish()).unwrap();
        let mut back = RefinerConfig::default();
        back.read_kv(&doc, "refiner.").unwrap();
        doc.finish().unwrap();
        assert_eq!(back, c);
    }
}
