//! Language-model training and LM-fused beam decoding.

mod beam;
mod lm;

pub use beam::{beam_decode, DecodeParams, Hypothesis};
pub use lm::{train_char_lm, CharNGramLM};
