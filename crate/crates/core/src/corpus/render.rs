//! Transcript sampling and prototype-based feature rendering.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::CorpusSpec;
use crate::numerics::Tensor;
use crate::rng::{stream, Rng};

/// Cosine-similarity ceiling enforced between distinct prototypes when the
/// alphabet is small relative to the feature dimension.
pub const MAX_PROTOTYPE_COSINE: f64 = 0.5;

const PROTOTYPE_STREAM: u64 = 0x5052_4f54_4f00_0000;
const MAX_REDRAWS: usize = 10_000;

/// One unit-norm feature vector per symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    vectors: Vec<Vec<f64>>,
}

impl Prototypes {
    /// Draws prototypes from the corpus master seed, redrawing the whole set
    /// until every pair has cosine similarity below [`MAX_PROTOTYPE_COSINE`]
    /// (enforced for `V <= 32`, `F >= 32`).
    pub fn build(spec: &CorpusSpec) -> Self {
        let mut rng = stream(spec.seed, &[PROTOTYPE_STREAM]);
        let enforce = spec.vocab_size <= 32 && spec.feature_dim >= 32;
        for _ in 0..MAX_REDRAWS {
            let vectors: Vec<Vec<f64>> =
                (0..spec.vocab_size).map(|_| unit_vector(spec.feature_dim, &mut rng)).collect();
            let p = Self { vectors };
            if !enforce || p.max_cosine() < MAX_PROTOTYPE_COSINE {
                return p;
            }
        }
        unreachable!("prototype redraw limit reached for V={} F={}", spec.vocab_size, spec.feature_dim)
    }

    pub fn get(&self, symbol: u16) -> &[f64] {
        &self.vectors[symbol as usize]
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn max_cosine(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.vectors.len() {
            for j in i + 1..self.vectors.len() {
                let dot: f64 = self.vectors[i].iter().zip(&self.vectors[j]).map(|(a, b)| a * b).sum();
                worst = worst.max(dot);
            }
        }
        worst
    }
}

fn unit_vector(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform length in `[min_len, max_len]`, uniform symbols in `[0, V)`.
pub fn sample_transcript(spec: &CorpusSpec, rng: &mut Rng) -> Vec<u16> {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    (0..len).map(|_| rng.random_range(0..spec.vocab_size) as u16).collect()
}

/// Holds each symbol's prototype for a random duration; the first frame of
/// every symbol after the first is the midpoint of the neighbouring
/// prototypes, and uniform jitter in `[-jitter, jitter]` is added throughout.
pub fn render_features(labels: &[u16], spec: &CorpusSpec, protos: &Prototypes, rng: &mut Rng) -> Tensor<f32> {
    assert!(!labels.is_empty(), "render_features: empty transcript");
    let f = spec.feature_dim;
    let durations: Vec<usize> =
        labels.iter().map(|_| rng.random_range(spec.min_frames..=spec.max_frames)).collect();
    let total: usize = durations.iter().sum();
    let mut data = Vec::with_capacity(total * f);
    for (k, (&sym, &dur)) in labels.iter().zip(&durations).enumerate() {
        let p = protos.get(sym);
        for frame in 0..dur {
            if frame == 0 && k > 0 {
                let prev = protos.get(labels[k - 1]);
                data.extend(p.iter().zip(prev).map(|(a, b)| 0.5 * (a + b)));
            } else {
                data.extend_from_slice(p);
            }
        }
    }
    if spec.jitter > 0.0 {
        for v in data.iter_mut() {
            *v += rng.random_range(-spec.jitter..=spec.jitter);
        }
    }
    Tensor::new(vec![total, f], data.into_iter().map(|v| v as f32).collect()).expect("rendered shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn forced_transcript() {
        let spec = CorpusSpec { vocab_size: 1, min_len: 1, max_len: 1, ..CorpusSpec::default() };
        assert_eq!(sample_transcript(&spec, &mut stream(1, &[])), vec![0]);
    }

    #[test]
    fn transcripts_are_seeded() {
        let spec = CorpusSpec::default();
        let a = sample_transcript(&spec, &mut stream(9, &[3]));
        let b = sample_transcript(&spec, &mut stream(9, &[3]));
        assert_eq!(a, b);
        assert!(a.len() >= spec.min_len && a.len() <= spec.max_len);
    }

    #[test]
    fn symbol_histogram_is_uniform() {
        let spec = CorpusSpec::default();
        let mut rng = stream(11, &[]);
        let mut counts = vec![0usize; spec.vocab_size];
        let mut total = 0usize;
        for _ in 0..10_000 {
            for s in sample_transcript(&spec, &mut rng) {
                counts[s as usize] += 1;
                total += 1;
            }
        }
        let p = 1.0 / spec.vocab_size as f64;
        let mean = total as f64 * p;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "count {c}, mean {mean}, sigma {sigma}");
        }
    }

    #[test]
    fn single_symbol_without_jitter_repeats_prototype() {
        let spec = CorpusSpec { jitter: 0.0, min_frames: 4, max_frames: 4, ..CorpusSpec::default() };
        let protos = Prototypes::build(&spec);
        let feats = render_features(&[3], &spec, &protos, &mut stream(0, &[]));
        assert_eq!(feats.shape(), &[4, spec.feature_dim]);
        for r in 0..4 {
            for (a, b) in feats.row(r).iter().zip(protos.get(3)) {
                assert_eq!(*a, *b as f32);
            }
        }
    }

    #[test]
    fn prototypes_are_separated_and_unit() {
        let spec = CorpusSpec::default();
        let protos = Prototypes::build(&spec);
        assert!(protos.max_cosine() < MAX_PROTOTYPE_COSINE);
        for s in 0..spec.vocab_size as u16 {
            let n: f64 = protos.get(s).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(protos, Prototypes::build(&spec));
    }

    #[test]
    fn rendering_is_seeded_and_crossfades() {
        let spec = CorpusSpec { jitter: 0.0, ..CorpusSpec::default() };
        let protos = Prototypes::build(&spec);
        let a = render_features(&[1, 2], &spec, &protos, &mut stream(5, &[]));
        let b = render_features(&[1, 2], &spec, &protos, &mut stream(5, &[]));
        assert_eq!(a, b);
        let t = a.shape()[0];
        let boundary = (0..t).find(|&r| a.row(r) != a.row(0)).unwrap();
        for (j, v) in a.row(boundary).iter().enumerate() {
            let mid = 0.5 * (protos.get(1)[j] + protos.get(2)[j]);
            assert_eq!(*v, mid as f32);
        }
    }
}
