//! Paired clean/noisy synthetic corpus.
//!
//! Each symbol of a small alphabet has a fixed unit-norm prototype feature
//! vector; utterances are rendered by holding prototypes for a random number
//! of frames. Noisy variants are mixed at an exact SNR, and a parametric
//! surrogate enhancer produces enhanced-but-imperfect variants.

pub mod dataset;
pub mod noise;
pub mod render;
pub mod surrogate;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::Tensor;

pub use dataset::{build_corpus, generate_split, read_dataset, write_dataset, Dataset, Split};
pub use noise::{measure_snr_db, mix_at_snr, mix_noise, noise_field, snr_gain};
pub use render::{render_features, sample_transcript, Prototypes};
pub use surrogate::{surrogate_enhance, SurrogateSe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    White,
    Babble,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::White => "white",
            NoiseKind::Babble => "babble",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "babble" => Ok(NoiseKind::Babble),
            other => Err(Error::Config(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    /// Symbols, excluding the CTC blank.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub feature_dim: usize,
    /// Half-width of the uniform per-coordinate jitter added to clean frames.
    pub jitter: f64,
    pub noise_kinds: Vec<NoiseKind>,
    pub snr_grid: Vec<f64>,
    pub train_count: usize,
    pub dev_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            vocab_size: 8,
            min_len: 2,
            max_len: 8,
            min_frames: 3,
            max_frames: 6,
            feature_dim: 32,
            jitter: 0.05,
            noise_kinds: vec![NoiseKind::White, NoiseKind::Babble],
            snr_grid: vec![-5.0, -2.0, 0.0, 2.0, 5.0, 10.0],
            train_count: 800,
            dev_count: 100,
            test_count: 100,
            seed: 20_251_017,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("corpus: {m}")));
        if self.vocab_size == 0 || self.vocab_size >= u16::MAX as usize {
            return bad("vocab_size must be in 1..65535");
        }
        if self.min_len < 1 || self.max_len < self.min_len || self.max_len > u16::MAX as usize {
            return bad("need 1 <= min_len <= max_len");
        }
        if self.min_frames < 1 || self.max_frames < self.min_frames {
            return bad("need 1 <= min_frames <= max_frames");
        }
        if self.feature_dim < 1 {
            return bad("feature_dim must be >= 1");
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad("jitter must be finite and >= 0");
        }
        if self.noise_kinds.is_empty() {
            return bad("noise_kinds must be non-empty");
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return bad("snr_grid must be non-empty and finite");
        }
        if self.train_count < 1 || self.dev_count < 1 || self.test_count < 1 {
            return bad("split counts must be >= 1");
        }
        Ok(())
    }

    /// Continuous SNR range used for training and dev draws.
    pub fn snr_range(&self) -> (f64, f64) {
        let lo = self.snr_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.snr_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Noise kind assigned to utterance `id`.
    pub fn noise_kind_for(&self, id: u32) -> NoiseKind {
        self.noise_kinds[id as usize % self.noise_kinds.len()]
    }

    pub fn read_kv(&mut self, doc: &KvDoc, prefix: &str) -> Result<()> {
        let k = |s: &str| format!("{prefix}{s}");
        doc.read(&k("vocab_size"), &mut self.vocab_size)?;
        doc.read(&k("min_len"), &mut self.min_len)?;
        doc.read(&k("max_len"), &mut self.max_len)?;
        doc.read(&k("min_frames"), &mut self.min_frames)?;
        doc.read(&k("max_frames"), &mut self.max_frames)?;
        doc.read(&k("feature_dim"), &mut self.feature_dim)?;
        doc.read(&k("jitter"), &mut self.jitter)?;
        doc.read_list(&k("noise_kinds"), &mut self.noise_kinds)?;
        doc.read_list(&k("snr_grid"), &mut self.snr_grid)?;
        doc.read(&k("train_count"), &mut self.train_count)?;
        doc.read(&k("dev_count"), &mut self.dev_count)?;
        doc.read(&k("test_count"), &mut self.test_count)?;
        doc.read(&k("seed"), &mut self.seed)?;
        Ok(())
    }

    pub fn write_kv(&self, w: &mut KvWriter, prefix: &str) {
        let k = |s: &str| format!("{prefix}{s}");
        w.put(&k("vocab_size"), self.vocab_size);
        w.put(&k("min_len"), self.min_len);
        w.put(&k("max_len"), self.max_len);
        w.put(&k("min_frames"), self.min_frames);
        w.put(&k("max_frames"), self.max_frames);
        w.put(&k("feature_dim"), self.feature_dim);
        w.put(&k("jitter"), self.jitter);
        w.put_list(&k("noise_kinds"), &self.noise_kinds);
        w.put_list(&k("snr_grid"), &self.snr_grid);
        w.put(&k("train_count"), self.train_count);
        w.put(&k("dev_count"), self.dev_count);
        w.put(&k("test_count"), self.test_count);
        w.put(&k("seed"), self.seed);
    }
}

/// One clean/noisy condition instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: u32,
    pub labels: Vec<u16>,
    /// `[T, F]` clean features.
    pub clean: Tensor<f32>,
    /// `[T, F]` noisy features.
    pub noisy: Tensor<f32>,
    /// Declared SNR; re-measuring the stored `clean` / `noisy - clean` pair
    /// agrees within [`dataset::SNR_TOLERANCE_DB`].
    pub snr_db: f32,
    pub noise_kind: NoiseKind,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.clean.shape()[0]
    }
}
