//! Test-set evaluation over the unprocessed / front-end / refined conditions.

use crate::asr::{edit_distance, greedy_decode, AsrModel, Provenance};
use crate::corpus::{Dataset, SurrogateSe};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::flow::{mean_pair_distance, refine, FlowConfig, PairVariant};
use crate::harness::report::{EvalReport, EvalRow};
use crate::refiner::Refiner;

pub const UNPROCESSED: &str = "unprocessed";
pub const UNPROCESSED_REFINED: &str = "unprocessed+refiner";
pub const SE: &str = "SE";
pub const SE_REFINED: &str = "SE+refiner";

fn check_compatible(dataset: &Dataset, asr: &AsrModel<f32>, refiner: Option<&Refiner<f32>>) -> Result<()> {
    let spec = &dataset.spec;
    if spec.feature_dim != asr.config.feature_dim || spec.vocab_size > asr.config.vocab_size {
        return Err(Error::Config(format!(
            "dataset has {} features / {} symbols, recognizer expects {} / {}",
            spec.feature_dim, spec.vocab_size, asr.config.feature_dim, asr.config.vocab_size
        )));
    }
    if let Some(r) = refiner {
        if r.config.latent_dim != asr.config.hidden {
            return Err(Error::Config(format!(
                "refiner latent_dim {} does not match recognizer hidden {}",
                r.config.latent_dim, asr.config.hidden
            )));
        }
    }
    Ok(())
}

/// Error rates of the recognizer under each condition. With both a front end
/// and a refiner the report holds, in order: unprocessed,
/// unprocessed+refiner, SE, SE+refiner.
pub fn evaluate(
    dataset: &Dataset,
    asr: &AsrModel<f32>,
    refiner: Option<&Refiner<f32>>,
    se: Option<&SurrogateSe>,
    flow: &FlowConfig,
) -> Result<EvalReport> {
    check_compatible(dataset, asr, refiner)?;
    flow.validate()?;
    let mut fronts = vec![(UNPROCESSED, UNPROCESSED_REFINED, PairVariant::Noisy)];
    if let Some(se) = se {
        se.validate()?;
        fronts.push((SE, SE_REFINED, PairVariant::Enhanced(*se)));
    }
    let utts = &dataset.utterances;
    let mut conditions = Vec::new();
    for (plain, refined, variant) in &fronts {
        // per utterance: (edits without refiner, edits with refiner)
        let edits = par_map(utts, |u| -> Result<(usize, Option<usize>)> {
            let z = asr.encode(&variant.features(u)?, Provenance::Noisy)?;
            let score = |z| -> Result<usize> { Ok(edit_distance(&u.labels, &greedy_decode(asr.classify(z)?.tensor()))) };
            let plain = score(&z)?;
            let refined = match refiner {
                Some(m) => Some(score(&refine(&z, m, flow)?)?),
                None => None,
            };
            Ok((plain, refined))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        conditions.push((*plain, edits.iter().map(|e| e.0).collect::<Vec<_>>()));
        if refiner.is_some() {
            conditions.push((*refined, edits.iter().map(|e| e.1.unwrap()).collect()));
        }
    }
    let snrs = dataset.snr_conditions();
    let mut rows = Vec::new();
    for (label, edits) in conditions {
        for &snr in &snrs {
            let (mut e, mut words, mut n) = (0usize, 0usize, 0usize);
            for (u, &k) in utts.iter().zip(&edits) {
                if u.snr_db == snr {
                    e += k;
                    words += u.labels.len();
                    n += 1;
                }
            }
            rows.push(EvalRow { condition: label.to_string(), snr_db: snr as f64, n_utts: n, wer: e as f64 / words as f64 });
        }
    }
    Ok(EvalReport { rows })
}

/// Mean per-frame squared distance to the clean latent, before and after refinement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentGap {
    pub before: f64,
    pub after: f64,
}

pub fn latent_gap(
    dataset: &Dataset,
    asr: &AsrModel<f32>,
    refiner: &Refiner<f32>,
    variant: &PairVariant,
    flow: &FlowConfig,
) -> Result<LatentGap> {
    check_compatible(dataset, asr, Some(refiner))?;
    let triples = par_map(&dataset.utterances, |u| -> Result<_> {
        let zc = asr.encode(&u.clean, Provenance::Clean)?.data;
        let z = asr.encode(&variant.features(u)?, Provenance::Noisy)?;
        let zr = refine(&z, refiner, flow)?.data;
        Ok((z.data, zr, zc))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(LatentGap {
        before: mean_pair_distance(triples.iter().map(|(z, _, c)| (z, c)))?,
        after: mean_pair_distance(triples.iter().map(|(_, r, c)| (r, c)))?,
    })
}
