//! Frame-synchronous (degraded, clean) latent pairs from a frozen encoder.

use crate::asr::{AsrModel, Provenance};
use crate::corpus::{surrogate_enhance, SurrogateSe, Utterance};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentPair {
    pub id: u32,
    pub snr_db: f32,
    /// Degraded latent: the path start and the conditioning input.
    pub source: Tensor<f32>,
    pub clean: Tensor<f32>,
}

impl LatentPair {
    pub fn new(id: u32, snr_db: f32, source: Tensor<f32>, clean: Tensor<f32>) -> Result<Self> {
        source.expect_same_shape(&clean, "latent pair")?;
        source.dims2()?;
        Ok(Self { id, snr_db, source, clean })
    }

    pub fn frames(&self) -> usize {
        self.source.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PairVariant {
    Clean,
    Noisy,
    Enhanced(SurrogateSe),
}

impl PairVariant {
    pub fn features(&self, utt: &Utterance) -> Result<Tensor<f32>> {
        match self {
            PairVariant::Clean => Ok(utt.clean.clone()),
            PairVariant::Noisy => Ok(utt.noisy.clone()),
            PairVariant::Enhanced(se) => surrogate_enhance(utt, se),
        }
    }

    fn provenance(&self) -> Provenance {
        match self {
            PairVariant::Clean => Provenance::Clean,
            PairVariant::Noisy => Provenance::Noisy,
            PairVariant::Enhanced(_) => Provenance::Enhanced,
        }
    }
}

/// One pair per utterance, in input order.
pub fn extract_latent_pairs(utts: &[Utterance], asr: &AsrModel<f32>, variant: &PairVariant) -> Result<Vec<LatentPair>> {
    par_map(utts, |u| {
        let zc = asr.encode(&u.clean, Provenance::Clean)?;
        let zs = asr.encode(&variant.features(u)?, variant.provenance())?;
        LatentPair::new(u.id, u.snr_db, zs.data, zc.data)
    })
    .into_iter()
    .collect()
}

/// Mean over pairs of the per-frame squared distance `‖a − b‖² / T`.
pub fn mean_pair_distance<'a>(pairs: impl IntoIterator<Item = (&'a Tensor<f32>, &'a Tensor<f32>)>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (a, b) in pairs {
        total += a.sq_dist(b)? / a.shape()[0] as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("distance over no pairs".into()));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asr::EncoderConfig;
    use crate::corpus::{generate_split, CorpusSpec, Split};

    #[test]
    fn clean_pairs_have_zero_distance_and_count_matches() {
        let spec = CorpusSpec { train_count: 5, dev_count: 1, test_count: 1, ..CorpusSpec::default() };
        let utts = generate_split(&spec, Split::Train).unwrap().utterances;
        let asr = AsrModel::<f32>::init(EncoderConfig::default(), 9).unwrap();
        let clean = extract_latent_pairs(&utts, &asr, &PairVariant::Clean).unwrap();
        assert_eq!(clean.len(), utts.len());
        assert_eq!(mean_pair_distance(clean.iter().map(|p| (&p.source, &p.clean))).unwrap(), 0.0);
        let noisy = extract_latent_pairs(&utts, &asr, &PairVariant::Noisy).unwrap();
        assert!(mean_pair_distance(noisy.iter().map(|p| (&p.source, &p.clean))).unwrap() > 0.0);
        for (p, u) in noisy.iter().zip(&utts) {
            assert_eq!((p.id, p.frames()), (u.id, u.frames()));
        }
    }

    #[test]
    fn unpaired_shapes_are_rejected() {
        let a = Tensor::<f32>::zeros(&[3, 2]);
        let b = Tensor::<f32>::zeros(&[4, 2]);
        assert!(LatentPair::new(0, 0.0, a, b).is_err());
    }
}
