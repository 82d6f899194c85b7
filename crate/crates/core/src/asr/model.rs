//! Pre-norm transformer encoder with a linear CTC head.

use std::fmt;

use crate::error::{Error, Result};
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::{fan_in_uniform, Bound, Graph, ParamSet, Real, Tensor, Var};
use crate::rng::stream;

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub feature_dim: usize,
    /// Symbols excluding blank; the blank id is `vocab_size`.
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk_scale(32, 8)
    }
}

impl EncoderConfig {
    pub fn desk_scale(feature_dim: usize, vocab_size: usize) -> Self {
        Self { layers: 2, heads: 2, hidden: 32, ffn: 64, feature_dim, vocab_size }
    }

    /// 12 layers, 4 heads, 256 hidden, 2048 feed-forward.
    pub fn large_scale(feature_dim: usize, vocab_size: usize) -> Self {
        Self { layers: 12, heads: 4, hidden: 256, ffn: 2048, feature_dim, vocab_size }
    }

    pub fn blank(&self) -> usize {
        self.vocab_size
    }

    pub fn classes(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("encoder: {m}")));
        if self.layers < 1 {
            return bad("layers must be >= 1".into());
        }
        if self.heads < 1 || self.hidden % self.heads != 0 {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.ffn < 1 || self.feature_dim < 1 || self.vocab_size < 1 {
            return bad("ffn, feature_dim and vocab_size must be >= 1".into());
        }
        Ok(())
    }

    pub fn read_kv(&mut self, doc: &KvDoc, prefix: &str) -> Result<()> {
        let k = |s: &str| format!("{prefix}{s}");
        doc.read(&k("layers"), &mut self.layers)?;
        doc.read(&k("heads"), &mut self.heads)?;
        doc.read(&k("hidden"), &mut self.hidden)?;
        doc.read(&k("ffn"), &mut self.ffn)?;
        doc.read(&k("feature_dim"), &mut self.feature_dim)?;
        doc.read(&k("vocab_size"), &mut self.vocab_size)?;
        Ok(())
    }

    pub fn write_kv(&self, w: &mut KvWriter, prefix: &str) {
        let k = |s: &str| format!("{prefix}{s}");
        w.put(&k("layers"), self.layers);
        w.put(&k("heads"), self.heads);
        w.put(&k("hidden"), self.hidden);
        w.put(&k("ffn"), self.ffn);
        w.put(&k("feature_dim"), self.feature_dim);
        w.put(&k("vocab_size"), self.vocab_size);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Clean,
    Noisy,
    Enhanced,
    Refined,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Clean => "clean",
            Provenance::Noisy => "noisy",
            Provenance::Enhanced => "enhanced",
            Provenance::Refined => "refined",
        })
    }
}

/// Encoder output `[T, d]`; the frame count equals the input frame count.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSequence<T> {
    pub data: Tensor<T>,
    pub provenance: Provenance,
}

impl<T: Real> LatentSequence<T> {
    pub fn new(data: Tensor<T>, provenance: Provenance) -> Result<Self> {
        data.dims2()?;
        data.check_finite("latent sequence")?;
        Ok(Self { data, provenance })
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.data.shape()[1]
    }
}

/// `[T, V+1]` frame log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct LogPosteriors<T>(pub Tensor<T>);

impl<T: Real> LogPosteriors<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

/// Sinusoidal positional encoding `[T, d]`.
pub fn positional_encoding<T: Real>(frames: usize, dim: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(frames * dim);
    for t in 0..frames {
        for j in 0..dim {
            let rate = 1.0 / 10_000f64.powf((2 * (j / 2)) as f64 / dim as f64);
            let x = t as f64 * rate;
            data.push(T::of_f64(if j % 2 == 0 { x.sin() } else { x.cos() }));
        }
    }
    Tensor::new(vec![frames, dim], data).expect("positional encoding shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsrModel<T> {
    pub config: EncoderConfig,
    pub params: ParamSet<T>,
}

impl<T: Real> AsrModel<T> {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, &[0x4153_5200]);
        let (f, d, h, c) = (config.feature_dim, config.hidden, config.ffn, config.classes());
        let mut p = ParamSet::new();
        p.insert("input.w", fan_in_uniform(&[f, d], f, &mut rng));
        p.insert("input.b", Tensor::zeros(&[d]));
        for l in 0..config.layers {
            let n = |s: &str| format!("layer{l}.{s}");
            p.insert(n("ln1.g"), Tensor::full(&[d], T::one()));
            p.insert(n("ln1.b"), Tensor::zeros(&[d]));
            for m in ["wq", "wk", "wv", "wo"] {
                p.insert(n(m), fan_in_uniform(&[d, d], d, &mut rng));
                p.insert(n(&m.replace('w', "b")), Tensor::zeros(&[d]));
            }
            p.insert(n("ln2.g"), Tensor::full(&[d], T::one()));
            p.insert(n("ln2.b"), Tensor::zeros(&[d]));
            p.insert(n("ff1.w"), fan_in_uniform(&[d, h], d, &mut rng));
            p.insert(n("ff1.b"), Tensor::zeros(&[h]));
            p.insert(n("ff2.w"), fan_in_uniform(&[h, d], h, &mut rng));
            p.insert(n("ff2.b"), Tensor::zeros(&[d]));
        }
        p.insert("final_ln.g", Tensor::full(&[d], T::one()));
        p.insert("final_ln.b", Tensor::zeros(&[d]));
        p.insert("head.w", fan_in_uniform(&[d, c], d, &mut rng));
        p.insert("head.b", Tensor::zeros(&[c]));
        Ok(Self { config, params: p })
    }

    pub fn cast<U: Real>(&self) -> AsrModel<U> {
        AsrModel { config: self.config.clone(), params: self.params.cast() }
    }

    fn check_features(&self, features: &Tensor<T>) -> Result<()> {
        let (t, f) = features.dims2()?;
        if t == 0 {
            return Err(Error::Shape("encoder input has no frames".into()));
        }
        if f != self.config.feature_dim {
            return Err(Error::Shape(format!(
                "encoder expects {} feature dims, got {f}",
                self.config.feature_dim
            )));
        }
        Ok(())
    }

    /// Input projection, positional encoding and the transformer stack.
    pub fn encode_graph<'g>(&self, p: &Bound<'g, '_, T>, features: Var<'g, T>) -> Var<'g, T> {
        let cfg = &self.config;
        let g = features.graph();
        let frames = features.shape()[0];
        let pe = g.constant(positional_encoding(frames, cfg.hidden));
        let mut x = features.linear(p.var("input.w"), p.var("input.b")).add(pe);
        let dk = cfg.hidden / cfg.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        for l in 0..cfg.layers {
            let v = |s: &str| p.var(&format!("layer{l}.{s}"));
            let a = x.layer_norm(v("ln1.g"), v("ln1.b"), LN_EPS);
            let q = a.linear(v("wq"), v("bq"));
            let k = a.linear(v("wk"), v("bk"));
            let val = a.linear(v("wv"), v("bv"));
            let heads: Vec<_> = (0..cfg.heads)
                .map(|h| {
                    let qh = q.slice_cols(h * dk, dk);
                    let kh = k.slice_cols(h * dk, dk);
                    let vh = val.slice_cols(h * dk, dk);
                    qh.matmul(kh.transpose()).scale(scale).softmax_rows().matmul(vh)
                })
                .collect();
            let attn = if heads.len() == 1 { heads[0] } else { Var::concat_cols(&heads) };
            x = x.add(attn.linear(v("wo"), v("bo")));
            let b = x.layer_norm(v("ln2.g"), v("ln2.b"), LN_EPS);
            let ff = b.linear(v("ff1.w"), v("ff1.b")).relu().linear(v("ff2.w"), v("ff2.b"));
            x = x.add(ff);
        }
        x.layer_norm(p.var("final_ln.g"), p.var("final_ln.b"), LN_EPS)
    }

    /// Linear projection to `V+1` classes followed by log-softmax.
    pub fn classify_graph<'g>(&self, p: &Bound<'g, '_, T>, latents: Var<'g, T>) -> Var<'g, T> {
        latents.linear(p.var("head.w"), p.var("head.b")).log_softmax_rows()
    }

    pub fn encode(&self, features: &Tensor<T>, provenance: Provenance) -> Result<LatentSequence<T>> {
        self.check_features(features)?;
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let h = self.encode_graph(&p, g.constant(features.clone()));
        g.check()?;
        LatentSequence::new(h.value(), provenance)
    }

    pub fn classify(&self, latents: &LatentSequence<T>) -> Result<LogPosteriors<T>> {
        if latents.dim() != self.config.hidden {
            return Err(Error::Shape(format!(
                "head expects latent dim {}, got {}",
                self.config.hidden,
                latents.dim()
            )));
        }
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let lp = self.classify_graph(&p, g.constant(latents.data.clone()));
        g.check()?;
        Ok(LogPosteriors(lp.value()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Graph;

    fn features(t: usize, f: usize) -> Tensor<f32> {
        Tensor::new(vec![t, f], (0..t * f).map(|i| ((i * 37 % 11) as f32 - 5.0) * 0.1).collect()).unwrap()
    }

    #[test]
    fn encode_shape_and_determinism() {
        let m = AsrModel::<f32>::init(EncoderConfig::default(), 1).unwrap();
        for t in [1, 5, 17] {
            let z = m.encode(&features(t, 32), Provenance::Clean).unwrap();
            assert_eq!(z.data.shape(), &[t, 32]);
            assert_eq!(z, m.encode(&features(t, 32), Provenance::Clean).unwrap());
        }
        assert!(m.encode(&features(4, 31), Provenance::Clean).is_err());
        assert!(m.encode(&Tensor::vector(vec![1.0; 32]), Provenance::Clean).is_err());
    }

    #[test]
    fn classify_rows_are_distributions() {
        let m = AsrModel::<f64>::init(EncoderConfig::default(), 2).unwrap();
        let z = m.encode(&features(6, 32).cast(), Provenance::Noisy).unwrap();
        let lp = m.classify(&z).unwrap();
        assert_eq!(lp.0.shape(), &[6, 9]);
        for r in 0..6 {
            let s: f64 = lp.0.row(r).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_head_gives_uniform_rows() {
        let mut m = AsrModel::<f64>::init(EncoderConfig::default(), 3).unwrap();
        let names: Vec<String> = m.params.names().to_vec();
        for (n, t) in names.iter().zip(m.params.tensors_mut()) {
            if n.starts_with("head.") {
                *t = Tensor::zeros(t.shape());
            }
        }
        let z = m.encode(&features(3, 32).cast(), Provenance::Clean).unwrap();
        let lp = m.classify(&z).unwrap();
        for v in lp.0.data() {
            assert!((v - (1.0f64 / 9.0).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_set_head() {
        // 1-dim latent, V = 1: logits (w0·z + b0, w1·z + b1)
        let cfg = EncoderConfig { layers: 1, heads: 1, hidden: 1, ffn: 1, feature_dim: 1, vocab_size: 1 };
        let mut m = AsrModel::<f64>::init(cfg, 0).unwrap();
        let names: Vec<String> = m.params.names().to_vec();
        for (n, t) in names.iter().zip(m.params.tensors_mut()) {
            match n.as_str() {
                "head.w" => *t = Tensor::from_f64(&[1, 2], &[2.0, -1.0]).unwrap(),
                "head.b" => *t = Tensor::from_f64(&[2], &[0.5, 0.0]).unwrap(),
                _ => {}
            }
        }
        let z = LatentSequence::new(Tensor::from_f64(&[1, 1], &[0.3]).unwrap(), Provenance::Clean).unwrap();
        let lp = m.classify(&z).unwrap();
        let (a, b) = (2.0 * 0.3 + 0.5, -0.3);
        let lse = (f64::exp(a) + f64::exp(b)).ln();
        assert!((lp.0.data()[0] - (a - lse)).abs() < 1e-12);
        assert!((lp.0.data()[1] - (b - lse)).abs() < 1e-12);
    }

    #[test]
    fn graph_path_matches_inference_path() {
        let m = AsrModel::<f64>::init(EncoderConfig::default(), 4).unwrap();
        let x = features(7, 32).cast::<f64>();
        let g = Graph::new();
        let p = m.params.bind(&g, true);
        let h = m.encode_graph(&p, g.constant(x.clone()));
        assert_eq!(h.value(), m.encode(&x, Provenance::Clean).unwrap().data);
    }
}
