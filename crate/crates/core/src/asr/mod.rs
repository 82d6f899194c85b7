//! Frozen CTC recognizer: transformer encoder, linear head, CTC loss,
//! greedy decoding and error rate.

pub mod ctc;
pub mod decode;
pub mod model;
pub mod train;

pub use ctc::{ctc_log_prob, ctc_loss, ctc_loss_and_grad, min_frames};
pub use decode::{edit_distance, greedy_decode, wer};
pub use model::{positional_encoding, AsrModel, EncoderConfig, LatentSequence, LogPosteriors, Provenance};
pub use train::{corpus_wer, train_asr, AsrEpoch, AsrTrainConfig, AsrTrained};
