//! Flow-matching training of the refiner against a frozen recognizer.

use rand::seq::SliceRandom;

use crate::asr::AsrModel;
use crate::error::{Error, Result};
use crate::flow::{cfm_loss_and_grads, cfm_loss_at, draw_times, FlowConfig, LatentPair};
use crate::kv::{KvDoc, KvWriter};
use crate::numerics::{AdamConfig, AdamState};
use crate::refiner::{Refiner, RefinerConfig};
use crate::rng::stream;

const SHUFFLE_STREAM: u64 = 0x5246_5348;
const TIME_STREAM: u64 = 0x5246_5449;
const DEV_TIME_STREAM: u64 = 0x5246_4456;

#[derive(Clone, Debug, PartialEq)]
pub struct RefinerTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for RefinerTrainConfig {
    fn default() -> Self {
        Self { epochs: 60, batch_size: 16, lr: 1e-3, seed: 2 }
    }
}

impl RefinerTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("refiner_train: epochs and batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("refiner_train: lr must be positive".into()));
        }
        Ok(())
    }

    pub fn read_kv(&mut self, doc: &KvDoc, prefix: &str) -> Result<()> {
        let k = |s: &str| format!("{prefix}{s}");
        doc.read(&k("epochs"), &mut self.epochs)?;
        doc.read(&k("batch_size"), &mut self.batch_size)?;
        doc.read(&k("lr"), &mut self.lr)?;
        doc.read(&k("seed"), &mut self.seed)?;
        Ok(())
    }

    pub fn write_kv(&self, w: &mut KvWriter, prefix: &str) {
        let k = |s: &str| format!("{prefix}{s}");
        w.put(&k("epochs"), self.epochs);
        w.put(&k("batch_size"), self.batch_size);
        w.put(&k("lr"), self.lr);
        w.put(&k("seed"), self.seed);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinerEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Clone, Debug)]
pub struct RefinerTrained {
    /// Parameters from the epoch with the lowest dev loss.
    pub model: Refiner<f32>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    /// Dev loss of the zero-initialized field.
    pub init_dev_loss: f64,
    pub log: Vec<RefinerEpoch>,
}

/// Minimizes the flow-matching loss over `train` pairs; the recognizer is
/// only read, and its checksum is verified unchanged on return.
pub fn train_refiner(
    train: &[LatentPair],
    dev: &[LatentPair],
    asr: &AsrModel<f32>,
    flow: &FlowConfig,
    refiner: RefinerConfig,
    config: &RefinerTrainConfig,
    mut on_epoch: impl FnMut(&RefinerEpoch),
) -> Result<RefinerTrained> {
    config.validate()?;
    flow.validate()?;
    if refiner.latent_dim != asr.config.hidden {
        return Err(Error::Config(format!(
            "refiner latent_dim {} does not match encoder hidden {}",
            refiner.latent_dim, asr.config.hidden
        )));
    }
    if train.is_empty() || dev.is_empty() {
        return Err(Error::InvalidArgument("refiner training needs non-empty train and dev pairs".into()));
    }
    let asr_sum = asr.params.checksum();
    let mut model = Refiner::<f32>::init(refiner, config.seed)?;
    let mut adam = AdamState::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, model.params.tensors());
    let dev_refs: Vec<&LatentPair> = dev.iter().collect();
    let dev_times = draw_times(&mut stream(config.seed, &[DEV_TIME_STREAM]), dev.len());
    let init_dev_loss = cfm_loss_at(&model, &dev_refs, &dev_times, flow)?;
    let mut best = (model.clone(), 0usize, init_dev_loss);
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut stream(config.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LatentPair> = chunk.iter().map(|&i| &train[i]).collect();
            let times = draw_times(&mut stream(config.seed, &[TIME_STREAM, epoch as u64, b as u64]), batch.len());
            let (loss, grads) = cfm_loss_and_grads(&model, &batch, &times, flow)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, detail: format!("flow-matching loss {loss}") });
            }
            adam.step(model.params.tensors_mut(), &grads)
                .map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            epoch_loss += loss * batch.len() as f64;
        }
        let dev_loss = cfm_loss_at(&model, &dev_refs, &dev_times, flow)?;
        let entry = RefinerEpoch { epoch, train_loss: epoch_loss / train.len() as f64, dev_loss };
        on_epoch(&entry);
        log.push(entry);
        if dev_loss < best.2 {
            best = (model.clone(), epoch, dev_loss);
        }
    }
    if asr.params.checksum() != asr_sum {
        return Err(Error::InvalidArgument("recognizer parameters changed during refiner training".into()));
    }
    let (model, best_epoch, best_dev_loss) = best;
    Ok(RefinerTrained { model, best_epoch, best_dev_loss, init_dev_loss, log })
}
