//! Configuration, checkpoints, evaluation and reports.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod pipeline;
pub mod report;
pub mod selftest;

pub use checkpoint::{Checkpoint, ModelKind, TrainMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ExperimentConfig;
pub use eval::{evaluate, latent_gap, LatentGap, SE, SE_REFINED, UNPROCESSED, UNPROCESSED_REFINED};
pub use pipeline::{run_all, RunSummary};
pub use report::{EvalReport, EvalRow};
