//! Fast built-in verification suite behind the `selftest` subcommand.

use rand::Rng as _;

use crate::asr::{ctc_log_prob, ctc_loss, AsrModel, EncoderConfig};
use crate::corpus::dataset::{decode_dataset, encode_dataset};
use crate::corpus::{generate_split, CorpusSpec, Split};
use crate::error::Result;
use crate::flow::{cfm_loss_and_grads, cfm_loss_at, euler_integrate, ot_interpolate, target_field, FlowConfig, LatentPair, VectorField};
use crate::harness::checkpoint::{Checkpoint, TrainMeta};
use crate::harness::report::{EvalReport, EvalRow};
use crate::numerics::{finite_diff_grad, max_rel_error, Graph, Tensor};
use crate::refiner::{Refiner, RefinerConfig};
use crate::rng::{stream, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn log_softmax_rows(t: &Tensor<f64>) -> Tensor<f64> {
    let (r, c) = t.dims2().unwrap();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = t.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Tensor::new(vec![r, c], out).unwrap()
}

fn random_matrix(rng: &mut Rng, r: usize, c: usize, scale: f64) -> Tensor<f64> {
    Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Probability of `target` by summing over every frame path.
fn brute_force_ctc(lp: &Tensor<f64>, target: &[u16]) -> f64 {
    let (frames, classes) = lp.dims2().unwrap();
    let blank = classes - 1;
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    loop {
        let mut out = Vec::new();
        let mut prev = usize::MAX;
        for &k in &path {
            if k != prev && k != blank {
                out.push(k as u16);
            }
            prev = k;
        }
        if out == target {
            total += path.iter().enumerate().map(|(t, &k)| lp.row(t)[k]).sum::<f64>().exp();
        }
        let mut i = 0;
        while i < frames {
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
        if i == frames {
            return total;
        }
    }
}

fn ctc_oracle() -> Result<(bool, String)> {
    let mut rng = stream(11, &[]);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for frames in 1..=3 {
        for vocab in 1..=2u16 {
            let targets: Vec<Vec<u16>> = std::iter::once(vec![])
                .chain((0..vocab).map(|a| vec![a]))
                .chain((0..vocab).flat_map(|a| (0..vocab).map(move |b| vec![a, b])))
                .collect();
            for y in targets {
                if crate::asr::min_frames(&y) > frames {
                    continue;
                }
                let lp = log_softmax_rows(&random_matrix(&mut rng, frames, vocab as usize + 1, 2.0));
                let fast = ctc_log_prob(&lp, &y)?;
                worst = worst.max((fast - brute_force_ctc(&lp, &y).ln()).abs());
                cases += 1;
            }
        }
    }
    Ok((worst <= 1e-9, format!("{cases} cases, max |diff| {worst:.2e}")))
}

fn ctc_gradient() -> Result<(bool, String)> {
    let mut rng = stream(12, &[]);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let logits = random_matrix(&mut rng, 5, 3, 1.5);
        let target = [0u16, 1];
        let g = Graph::new();
        let x = g.param(logits.clone());
        let loss = ctc_loss(x.log_softmax_rows(), &target)?;
        let analytic = g.backward(loss)?.wrt_or_zero(x);
        let fd = finite_diff_grad(|z| -ctc_log_prob(&log_softmax_rows(z), &target).unwrap(), &logits, 1e-5);
        worst = worst.max(max_rel_error(&analytic, &fd, 1e-3));
    }
    Ok((worst <= 1e-5, format!("max relative error {worst:.2e}")))
}

fn tiny_refiner() -> RefinerConfig {
    RefinerConfig { depth: 1, base_channels: 4, mults: vec![1], time_dim: 4, groups: 2, latent_dim: 2 }
}

fn randomized(model: &mut Refiner<f64>, rng: &mut Rng) {
    for t in model.params.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

fn cfm_unet_gradient() -> Result<(bool, String)> {
    let mut rng = stream(13, &[]);
    let mut model = Refiner::<f64>::init(tiny_refiner(), 1)?;
    randomized(&mut model, &mut rng);
    let pair = |rng: &mut Rng, frames| {
        let a: Vec<f32> = (0..frames * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..frames * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        LatentPair::new(0, 0.0, Tensor::new(vec![frames, 2], a).unwrap(), Tensor::new(vec![frames, 2], b).unwrap())
    };
    let pairs = vec![pair(&mut rng, 3)?, pair(&mut rng, 4)?];
    let refs: Vec<&LatentPair> = pairs.iter().collect();
    let times = [0.3, 0.8];
    let flow = FlowConfig { sigma_min: 0.1, steps: 3 };
    let (_, grads) = cfm_loss_and_grads(&model, &refs, &times, &flow)?;
    let mut worst = 0.0f64;
    for (pi, g) in grads.iter().enumerate() {
        let k = rng.random_range(0..g.len());
        let x = Tensor::scalar(model.params.tensors()[pi].data()[k]);
        let fd = finite_diff_grad(
            |x| {
                let mut m = model.clone();
                m.params.tensors_mut()[pi].data_mut()[k] = x.item();
                cfm_loss_at(&m, &refs, &times, &flow).unwrap()
            },
            &x,
            1e-5,
        );
        worst = worst.max(max_rel_error(&Tensor::scalar(g.data()[k]), &fd, 1e-3));
    }
    Ok((worst <= 1e-5, format!("{} parameter tensors, max relative error {worst:.2e}", grads.len())))
}

fn flow_exactness() -> Result<(bool, String)> {
    let mut rng = stream(14, &[]);
    let x0 = Tensor::new(vec![3, 2], (0..6).map(|_| rng.random_range(-2.0f32..2.0)).collect())?;
    let x1 = Tensor::new(vec![3, 2], (0..6).map(|_| rng.random_range(-2.0f32..2.0)).collect())?;
    let mut ok = ot_interpolate(&x0, &x1, 0.0, 0.0)? == x0 && ot_interpolate(&x0, &x1, 1.0, 0.0)? == x1;
    let u = target_field(&x0, &x1, 0.0)?;
    let field = ConstantField(u.clone());
    for steps in [1, 3, 10] {
        let cfg = FlowConfig { sigma_min: 0.0, steps };
        ok &= euler_integrate(&field, &x0, &x0, &cfg)? == x0.add(&u)?;
    }
    Ok((ok, "endpoints and constant-field integration".into()))
}

struct ConstantField(Tensor<f32>);

impl VectorField<f32> for ConstantField {
    fn params(&self) -> &crate::numerics::ParamSet<f32> {
        static EMPTY: std::sync::OnceLock<crate::numerics::ParamSet<f32>> = std::sync::OnceLock::new();
        EMPTY.get_or_init(crate::numerics::ParamSet::new)
    }
    fn velocity<'g>(
        &self,
        _: &crate::numerics::Bound<'g, '_, f32>,
        x: crate::numerics::Var<'g, f32>,
        _: crate::numerics::Var<'g, f32>,
        _: f64,
    ) -> Result<crate::numerics::Var<'g, f32>> {
        Ok(x.graph().constant(self.0.clone()))
    }
}

fn zero_init() -> Result<(bool, String)> {
    let model = Refiner::<f32>::init(RefinerConfig::default(), 5)?;
    let z = crate::asr::LatentSequence::new(Tensor::full(&[7, 32], 0.25f32), crate::asr::Provenance::Noisy)?;
    let out = crate::flow::refine(&z, &model, &FlowConfig::default())?;
    Ok((out.data == z.data, "fresh refiner is the identity".into()))
}

fn round_trips() -> Result<(bool, String)> {
    let spec = CorpusSpec { train_count: 3, dev_count: 1, test_count: 2, ..CorpusSpec::default() };
    let ds = generate_split(&spec, Split::Test)?;
    let bytes = encode_dataset(&ds)?;
    let mut ok = encode_dataset(&generate_split(&spec, Split::Test)?)? == bytes;
    ok &= decode_dataset(&bytes)? == ds;
    let asr = AsrModel::<f32>::init(EncoderConfig::default(), 3)?;
    let ck = Checkpoint::from_asr(&asr, TrainMeta { epoch: 1, dev_metric: 0.5, seed: 3 });
    let enc = ck.encode()?;
    ok &= Checkpoint::decode(&enc)?.encode()? == enc;
    let report = EvalReport {
        rows: vec![EvalRow { condition: "unprocessed".into(), snr_db: -5.0, n_utts: 2, wer: 1.0 / 3.0 }],
    };
    ok &= EvalReport::parse_csv(&report.to_csv())? == report;
    Ok((ok, "dataset, checkpoint and report".into()))
}

pub fn run() -> Vec<Check> {
    vec![
        check("ctc matches path enumeration", ctc_oracle),
        check("ctc gradient vs finite differences", ctc_gradient),
        check("flow-matching and u-net gradient vs finite differences", cfm_unet_gradient),
        check("flow-matching exactness", flow_exactness),
        check("zero-initialized refiner is the identity", zero_init),
        check("format round trips", round_trips),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
