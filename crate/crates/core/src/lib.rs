//! Latent-level enhancement for a CTC speech recognizer.
//!
//! A clean-trained transformer/CTC recognizer ([`asr`]) is left frozen while a
//! conditional flow-matching vector field ([`refiner`], [`flow`]) learns to
//! transport degraded encoder latents toward their clean counterparts. The
//! [`corpus`] module generates the paired synthetic data and [`harness`] wires
//! everything into training and evaluation runs.

mod binio;
pub mod asr;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod flow;
pub mod harness;
pub mod kv;
pub mod numerics;
pub mod refiner;
pub mod rng;

pub use error::{Error, Result};
