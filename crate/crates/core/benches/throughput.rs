//! Data-parallel map against the sequential fallback on the per-utterance
//! workloads of training and evaluation.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latentfm::asr::{AsrModel, EncoderConfig, Provenance};
use latentfm::corpus::{generate_split, CorpusSpec, Split, Utterance};
use latentfm::exec::{par_map, seq_map};
use latentfm::flow::{cfm_loss_and_grads, extract_latent_pairs, refine, FlowConfig, LatentPair, PairVariant};
use latentfm::refiner::{Refiner, RefinerConfig};

type Map<I, R> = fn(&[I], &(dyn Fn(&I) -> R + Sync)) -> Vec<R>;

fn run_par<I: Sync, R: Send>(items: &[I], f: &(dyn Fn(&I) -> R + Sync)) -> Vec<R> {
    par_map(items, f)
}

fn run_seq<I: Sync, R: Send>(items: &[I], f: &(dyn Fn(&I) -> R + Sync)) -> Vec<R> {
    seq_map(items, f)
}

fn modes<I: Sync, R: Send>() -> [(&'static str, Map<I, R>); 2] {
    [("parallel", run_par::<I, R>), ("sequential", run_seq::<I, R>)]
}

fn setup() -> (Vec<Utterance>, AsrModel<f32>, Refiner<f32>, Vec<LatentPair>) {
    let spec = CorpusSpec { train_count: 32, dev_count: 1, test_count: 1, ..CorpusSpec::default() };
    let utts = generate_split(&spec, Split::Train).unwrap().utterances;
    let asr = AsrModel::<f32>::init(EncoderConfig::default(), 1).unwrap();
    let mut refiner = Refiner::<f32>::init(RefinerConfig::default(), 2).unwrap();
    // a fresh refiner is the identity; give the output layer weight so sampling does real work
    for (name, t) in refiner.params.names().to_vec().iter().zip(refiner.params.tensors_mut()) {
        if name.starts_with("out.") {
            *t = t.map(|_| 0.01);
        }
    }
    let pairs = extract_latent_pairs(&utts, &asr, &PairVariant::Noisy).unwrap();
    (utts, asr, refiner, pairs)
}

fn bench(c: &mut Criterion) {
    let (utts, asr, refiner, pairs) = setup();
    let flow = FlowConfig::default();

    let mut g = c.benchmark_group("asr_gradients");
    for (mode, map) in modes::<Utterance, f64>() {
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| map(black_box(&utts), &|u| asr.batch_loss_and_grads(&[u]).unwrap().0))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("refiner_gradients");
    for (mode, map) in modes::<LatentPair, f64>() {
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| map(black_box(&pairs), &|p| cfm_loss_and_grads(&refiner, &[p], &[0.5], &flow).unwrap().0))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("evaluation");
    for (mode, map) in modes::<Utterance, usize>() {
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| {
                map(black_box(&utts), &|u| {
                    let z = asr.encode(&u.noisy, Provenance::Noisy).unwrap();
                    let z = refine(&z, &refiner, &flow).unwrap();
                    latentfm::asr::greedy_decode(asr.classify(&z).unwrap().tensor()).len()
                })
            })
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench
}
criterion_main!(benches);
