//! The end-to-end recognizer: backbone, time-distributed grapheme
//! prediction, CTC loss, decoding, and the supervised trainer covering the
//! experiment presets.

mod ctc;
mod model;
mod trainer;

pub use ctc::{
    collapse, collapse_tokens, ctc_loss, ctc_loss_grads, greedy_decode, LogProbMatrix,
};
pub use model::{BackboneCache, BackboneConfig, BackboneModel, PredictionCache, PredictionLayer};
pub use trainer::{
    load_asr_checkpoint, train_asr, AsrModel, AsrTrainOptions, AsrTrainReport, FeatureExtractor,
    Preset,
};
