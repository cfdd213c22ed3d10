//! Multilingual grapheme speech-to-text at desk scale.
//!
//! The pipeline has three training stages plus decoding and scoring:
//!
//! 1. **Representation learning** ([`srl`]): a convolutional encoder and a
//!    causal context decoder trained on unlabeled waveforms with a
//!    contrastive objective, turning raw audio into feature sequences.
//! 2. **Backbone pretraining** ([`pretrain`]): the recognizer's
//!    convolutional/recurrent backbone is warmed up on those features by
//!    reconstructing masked frames under an L1 loss.
//! 3. **Supervised training** ([`asr`]): the full network is optimized with
//!    CTC over a grapheme vocabulary mixing Chinese characters and English
//!    letters.
//!
//! [`decode`] adds a character n-gram language model and prefix beam search,
//! [`eval`] scores hypotheses by label error rate, and [`cli`] exposes every
//! stage as a command plus a synthetic tone corpus for end-to-end tests.
//! All numerics are `f64` on CPU; see the crate examples for runnable
//! walkthroughs of each capability.

pub mod asr;
pub mod cli;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pretrain;
pub mod srl;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};

/// FNV-1a over a byte string; used for content fingerprints in checkpoint
/// metadata.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive a child RNG seed from a base seed and a stream label, so that
/// independent sampling streams never overlap. Stable across platforms.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    // splitmix64 over the base, folding in the label bytes.
    let mut z = base.wrapping_add(0x9e37_79b9_7f4a_7c15);
    for &b in label.as_bytes() {
        z ^= u64::from(b);
        z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z ^= z >> 27;
    }
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
