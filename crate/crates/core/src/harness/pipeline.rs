//! Stage runners shared by the command-line tool and the end-to-end tests.

use std::path::{Path, PathBuf};

use crate::asr::{train_asr, AsrModel, AsrTrained};
use crate::corpus::{build_corpus, read_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::flow::{extract_latent_pairs, LatentPair, PairVariant};
use crate::harness::checkpoint::{Checkpoint, TrainMeta};
use crate::harness::config::ExperimentConfig;
use crate::harness::eval::{evaluate, latent_gap, LatentGap, SE, SE_REFINED, UNPROCESSED, UNPROCESSED_REFINED};
use crate::harness::report::EvalReport;
use crate::refiner::{train_refiner, Refiner, RefinerTrained};

pub const ASR_CHECKPOINT: &str = "asr.ckpt";
pub const REFINER_CHECKPOINT: &str = "refiner.ckpt";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TABLE: &str = "report.txt";
pub const SUMMARY: &str = "summary.txt";

pub type Log<'a> = &'a mut dyn FnMut(&str);

fn load_split(data_dir: &Path, split: Split) -> Result<Dataset> {
    read_dataset(&data_dir.join(split.file_name()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn log_config(cfg: &ExperimentConfig, log: Log<'_>) {
    log("resolved config:");
    for line in cfg.to_kv().lines() {
        log(&format!("  {line}"));
    }
}

pub fn gen_data(cfg: &ExperimentConfig, out_dir: &Path, log: Log<'_>) -> Result<()> {
    log_config(cfg, log);
    log(&format!("corpus seed {}, writing {}", cfg.corpus.seed, out_dir.display()));
    build_corpus(&cfg.corpus, out_dir)
}

pub fn load_asr(path: &Path) -> Result<AsrModel<f32>> {
    Checkpoint::load(path)?.into_asr()
}

pub fn load_refiner(path: &Path) -> Result<Refiner<f32>> {
    Checkpoint::load(path)?.into_refiner()
}

pub fn train_asr_stage(cfg: &ExperimentConfig, data_dir: &Path, out: &Path, log: Log<'_>) -> Result<AsrTrained> {
    log_config(cfg, log);
    let train = load_split(data_dir, Split::Train)?;
    let dev = load_split(data_dir, Split::Dev)?;
    if train.spec != cfg.corpus {
        log("warning: dataset spec differs from config corpus section; using the dataset as stored");
    }
    log(&format!("training recognizer, seed {}", cfg.asr_train.seed));
    let trained = train_asr(&train.utterances, &dev.utterances, cfg.encoder.clone(), &cfg.asr_train, |e| {
        log(&format!(
            "asr epoch {:3} loss {:.5} dev_wer {:.4} lr {:.3e}",
            e.epoch, e.train_loss, e.dev_wer, e.lr
        ))
    })?;
    log(&format!("best dev wer {:.4} at epoch {}", trained.best_dev_wer, trained.best_epoch));
    let meta = TrainMeta { epoch: trained.best_epoch as u32, dev_metric: trained.best_dev_wer, seed: cfg.asr_train.seed };
    ensure_parent(out)?;
    Checkpoint::from_asr(&trained.model, meta).save(out)?;
    log(&format!("wrote {}", out.display()));
    Ok(trained)
}

/// Noisy pairs followed by one enhanced set per front-end profile.
pub fn refiner_pairs(cfg: &ExperimentConfig, ds: &Dataset, asr: &AsrModel<f32>) -> Result<Vec<LatentPair>> {
    let mut pairs = extract_latent_pairs(&ds.utterances, asr, &PairVariant::Noisy)?;
    for se in cfg.se()? {
        pairs.extend(extract_latent_pairs(&ds.utterances, asr, &PairVariant::Enhanced(se))?);
    }
    Ok(pairs)
}

pub fn train_refiner_stage(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    asr_ckpt: &Path,
    out: &Path,
    log: Log<'_>,
) -> Result<RefinerTrained> {
    log_config(cfg, log);
    let asr = load_asr(asr_ckpt)?;
    let train = refiner_pairs(cfg, &load_split(data_dir, Split::Train)?, &asr)?;
    let dev = refiner_pairs(cfg, &load_split(data_dir, Split::Dev)?, &asr)?;
    log(&format!(
        "training refiner on {} pairs ({} dev), seed {}",
        train.len(),
        dev.len(),
        cfg.refiner_train.seed
    ));
    let trained =
        train_refiner(&train, &dev, &asr, &cfg.flow, cfg.refiner.clone(), &cfg.refiner_train, |e| {
            log(&format!("refiner epoch {:3} loss {:.5} dev_loss {:.5}", e.epoch, e.train_loss, e.dev_loss))
        })?;
    log(&format!(
        "dev loss {:.5} at init, best {:.5} at epoch {}",
        trained.init_dev_loss, trained.best_dev_loss, trained.best_epoch
    ));
    let meta =
        TrainMeta { epoch: trained.best_epoch as u32, dev_metric: trained.best_dev_loss, seed: cfg.refiner_train.seed };
    ensure_parent(out)?;
    Checkpoint::from_refiner(&trained.model, meta).save(out)?;
    log(&format!("wrote {}", out.display()));
    Ok(trained)
}

/// Report over the test split. Extra front-end profiles after the first are
/// labelled `SE@strength:artifact`.
pub fn evaluate_all(
    cfg: &ExperimentConfig,
    test: &Dataset,
    asr: &AsrModel<f32>,
    refiner: Option<&Refiner<f32>>,
) -> Result<EvalReport> {
    let profiles = cfg.se()?;
    if profiles.is_empty() {
        return evaluate(test, asr, refiner, None, &cfg.flow);
    }
    let mut report = EvalReport::default();
    for (i, se) in profiles.iter().enumerate() {
        let mut part = evaluate(test, asr, refiner, Some(se), &cfg.flow)?;
        if i > 0 {
            part.rows.retain(|r| r.condition != UNPROCESSED && r.condition != UNPROCESSED_REFINED);
            let tag = format!("@{}:{}", se.strength, se.artifact);
            for r in &mut part.rows {
                r.condition = match r.condition.as_str() {
                    SE => format!("{SE}{tag}"),
                    SE_REFINED => format!("{SE}{tag}+refiner"),
                    other => other.to_string(),
                };
            }
        }
        report.merge(part);
    }
    Ok(report)
}

pub fn eval_stage(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    asr_ckpt: &Path,
    refiner_ckpt: Option<&Path>,
    out_dir: &Path,
    log: Log<'_>,
) -> Result<EvalReport> {
    log_config(cfg, log);
    let asr = load_asr(asr_ckpt)?;
    let refiner = refiner_ckpt.map(load_refiner).transpose()?;
    let test = load_split(data_dir, Split::Test)?;
    let report = evaluate_all(cfg, &test, &asr, refiner.as_ref())?;
    ensure_dir(out_dir)?;
    report.write_csv(&out_dir.join(REPORT_CSV))?;
    report.write_table(&out_dir.join(REPORT_TABLE))?;
    for line in report.to_table().lines() {
        log(line);
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
    pub report: EvalReport,
    pub clean_test_wer: f64,
    pub gap: LatentGap,
    pub fresh_report: EvalReport,
}

impl RunSummary {
    pub fn render(&self) -> String {
        let mut s = self.report.to_table();
        s.push_str(&format!("clean test wer: {}\n", self.clean_test_wer));
        s.push_str(&format!("held-out latent gap before refinement: {}\n", self.gap.before));
        s.push_str(&format!("held-out latent gap after refinement: {}\n", self.gap.after));
        s
    }
}

/// Every stage in order under `root`: `root/data` and `root/run`.
pub fn run_all(cfg: &ExperimentConfig, root: &Path, log: Log<'_>) -> Result<RunSummary> {
    let data_dir = root.join("data");
    let run_dir = root.join("run");
    gen_data(cfg, &data_dir, log)?;
    let asr_path = run_dir.join(ASR_CHECKPOINT);
    let ref_path = run_dir.join(REFINER_CHECKPOINT);
    train_asr_stage(cfg, &data_dir, &asr_path, log)?;
    train_refiner_stage(cfg, &data_dir, &asr_path, &ref_path, log)?;
    let report = eval_stage(cfg, &data_dir, &asr_path, Some(&ref_path), &run_dir, log)?;

    let asr = load_asr(&asr_path)?;
    let refiner = load_refiner(&ref_path)?;
    let test = load_split(&data_dir, Split::Test)?;
    let clean_test_wer = asr.clean_wer(&test.utterances)?;
    let gap = latent_gap(&test, &asr, &refiner, &PairVariant::Noisy, &cfg.flow)?;
    let fresh = Refiner::<f32>::init(cfg.refiner.clone(), cfg.refiner_train.seed)?;
    let fresh_report = evaluate_all(cfg, &test, &asr, Some(&fresh))?;
    let summary = RunSummary { data_dir, run_dir: run_dir.clone(), report, clean_test_wer, gap, fresh_report };
    let path = run_dir.join(SUMMARY);
    std::fs::write(&path, summary.render()).map_err(|e| Error::io(&path, e))?;
    log(&format!("clean test wer {:.4}", clean_test_wer));
    log(&format!("latent gap {:.4} -> {:.4}", gap.before, gap.after));
    Ok(summary)
}
