//! Clean-feature CTC training of the recognizer.

use rand::seq::SliceRandom;

use crate::asr::ctc::ctc_loss;
use crate::asr::decode::{edit_distance, greedy_decode};
use crate::asr::model::{AsrModel, EncoderConfig, Provenance};
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::{sum_grads, AdamConfig, AdamState, Graph, Tensor};
use crate::rng::stream;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Clone, Debug, PartialEq)]
pub struct AsrTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning-rate factor applied after `patience` epochs without a dev improvement.
    pub decay: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for AsrTrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 16, lr: 1e-3, decay: 0.5, patience: 2, seed: 1 }
    }
}

impl AsrTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || self.patience < 1 {
            return Err(Error::Config("asr_train: epochs, batch_size and patience must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config("asr_train: need lr > 0 and decay in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn read_kv(&mut self, doc: &KvDoc, prefix: &str) -> Result<()> {
        let k = |s: &str| format!("{prefix}{s}");
        doc.read(&k("epochs"), &mut self.epochs)?;
        doc.read(&k("batch_size"), &mut self.batch_size)?;
        doc.read(&k("lr"), &mut self.lr)?;
        doc.read(&k("decay"), &mut self.decay)?;
        doc.read(&k("patience"), &mut self.patience)?;
        doc.read(&k("seed"), &mut self.seed)?;
        Ok(())
    }

    pub fn write_kv(&self, w: &mut KvWriter, prefix: &str) {
        let k = |s: &str| format!("{prefix}{s}");
        w.put(&k("epochs"), self.epochs);
        w.put(&k("batch_size"), self.batch_size);
        w.put(&k("lr"), self.lr);
        w.put(&k("decay"), self.decay);
        w.put(&k("patience"), self.patience);
        w.put(&k("seed"), self.seed);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsrEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_wer: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct AsrTrained {
    /// Parameters from the epoch with the lowest dev error rate.
    pub model: AsrModel<f32>,
    pub best_epoch: usize,
    pub best_dev_wer: f64,
    pub log: Vec<AsrEpoch>,
}

/// Total edit distance over total reference length.
pub fn corpus_wer(pairs: &[(Vec<u16>, Vec<u16>)]) -> Result<f64> {
    let words: usize = pairs.iter().map(|(r, _)| r.len()).sum();
    if words == 0 {
        return Err(Error::InvalidArgument("error rate over an empty reference set".into()));
    }
    let edits: usize = pairs.iter().map(|(r, h)| edit_distance(r, h)).sum();
    Ok(edits as f64 / words as f64)
}

impl AsrModel<f32> {
    /// Greedy transcript of a feature matrix.
    pub fn transcribe(&self, features: &Tensor<f32>) -> Result<Vec<u16>> {
        let z = self.encode(features, Provenance::Clean)?;
        Ok(greedy_decode(self.classify(&z)?.tensor()))
    }

    /// Clean-feature error rate over `utts`.
    pub fn clean_wer(&self, utts: &[Utterance]) -> Result<f64> {
        let pairs = par_map(utts, |u| self.transcribe(&u.clean).map(|h| (u.labels.clone(), h)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        corpus_wer(&pairs)
    }

    /// Mean CTC loss over `utts` and its gradient, in parameter order.
    pub fn batch_loss_and_grads(&self, utts: &[&Utterance]) -> Result<(f64, Vec<Tensor<f32>>)> {
        let scale = 1.0 / utts.len() as f64;
        let parts = par_map(utts, |u| -> Result<(f64, Vec<Tensor<f32>>)> {
            let g = Graph::new();
            let p = self.params.bind(&g, true);
            let h = self.encode_graph(&p, g.constant(u.clean.clone()));
            let lp = self.classify_graph(&p, h);
            let loss = ctc_loss(lp, &u.labels)?.scale(scale);
            let grads = g.backward(loss)?;
            Ok((loss.value().item() as f64, p.grads(&grads)))
        });
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(parts.len());
        for part in parts {
            let (l, gr) = part?;
            total += l;
            grads.push(gr);
        }
        let grads = sum_grads(grads).ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        Ok((total, grads))
    }
}

/// Trains encoder and head on clean features only.
pub fn train_asr(
    train: &[Utterance],
    dev: &[Utterance],
    encoder: EncoderConfig,
    config: &AsrTrainConfig,
    mut on_epoch: impl FnMut(&AsrEpoch),
) -> Result<AsrTrained> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::InvalidArgument("asr training needs non-empty train and dev sets".into()));
    }
    let mut model = AsrModel::<f32>::init(encoder, config.seed)?;
    let mut adam = AdamState::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, model.params.tensors());
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut since_best = 0;
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut stream(config.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Utterance> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = model.batch_loss_and_grads(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, detail: format!("ctc loss {loss}") });
            }
            adam.step(model.params.tensors_mut(), &grads)
                .map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            epoch_loss += loss * batch.len() as f64;
        }
        let dev_wer = model.clean_wer(dev)?;
        let entry = AsrEpoch { epoch, train_loss: epoch_loss / train.len() as f64, dev_wer, lr: adam.config.lr };
        on_epoch(&entry);
        log.push(entry);
        if dev_wer < best.2 {
            best = (model.clone(), epoch, dev_wer);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                adam.set_lr(adam.config.lr * config.decay);
                since_best = 0;
            }
        }
    }
    let (model, best_epoch, best_dev_wer) = best;
    Ok(AsrTrained { model, best_epoch, best_dev_wer, log })
}
