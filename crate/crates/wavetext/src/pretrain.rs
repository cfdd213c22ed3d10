//! Unsupervised backbone pretraining: random frame corruption (zero /
//! noise / neighbor-smooth), a transposed-convolution reconstruction head,
//! and the masked L1 objective over corrupted positions only.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::asr::{BackboneCache, BackboneConfig, BackboneModel};
use crate::corpus::FeatureSequence;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{adam_step, save_checkpoint, AdamState, LrSchedule, ParameterStore, TransposedConv1d};

/// Fraction of frames selected for corruption.
pub const MASK_FRACTION: f64 = 0.15;
/// Neighbors considered on each side by the smoothing action.
pub const SMOOTH_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAction {
    Zero,
    Noise,
    Smooth,
}

/// Which frames are corrupted and how. `slots[t]` is `Some(action)` exactly
/// when frame t is selected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    pub slots: Vec<Option<MaskAction>>,
}

impl MaskSpec {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn none(t: usize) -> Self {
        Self { slots: vec![None; t] }
    }
}

/// Select ~15% of frames i.i.d.; each selected frame draws p uniform in
/// [0,1): p < 0.1 zeroes the frame, 0.1 <= p < 0.2 replaces it with noise,
/// and p >= 0.2 smooths it from its neighbors.
pub fn select_mask(t: usize, rng: &mut ChaCha8Rng) -> MaskSpec {
    assert!(t >= 1, "mask needs at least one frame");
    let slots = (0..t)
        .map(|_| {
            if rng.random_range(0.0..1.0) < MASK_FRACTION {
                let p: f64 = rng.random_range(0.0..1.0);
                Some(if p < 0.1 {
                    MaskAction::Zero
                } else if p < 0.2 {
                    MaskAction::Noise
                } else {
                    MaskAction::Smooth
                })
            } else {
                None
            }
        })
        .collect();
    MaskSpec { slots }
}

/// Corrupt the selected frames; unselected frames are copied exactly.
/// Smoothing averages up to [`SMOOTH_NEIGHBORS`] original frames on each
/// side, excluding the frame itself, renormalized by the neighbors that
/// actually exist at sequence edges.
pub fn apply_mask(
    features: &FeatureSequence,
    spec: &MaskSpec,
    rng: &mut ChaCha8Rng,
) -> FeatureSequence {
    let t_len = features.frames.nrows();
    assert_eq!(spec.len(), t_len, "mask length must equal frame count");
    let d = features.frames.ncols();
    let mut out = features.frames.clone();
    for (t, slot) in spec.slots.iter().enumerate() {
        match slot {
            None => {}
            Some(MaskAction::Zero) => out.row_mut(t).fill(0.0),
            Some(MaskAction::Noise) => {
                for v in out.row_mut(t) {
                    *v = StandardNormal.sample(rng);
                }
            }
            Some(MaskAction::Smooth) => {
                let lo = t.saturating_sub(SMOOTH_NEIGHBORS);
                let hi = (t + SMOOTH_NEIGHBORS).min(t_len - 1);
                let mut acc = vec![0.0f64; d];
                let mut count = 0usize;
                for n in lo..=hi {
                    if n == t {
                        continue;
                    }
                    for (a, &v) in acc.iter_mut().zip(features.frames.row(n)) {
                        *a += v;
                    }
                    count += 1;
                }
                if count > 0 {
                    for (slot, a) in out.row_mut(t).iter_mut().zip(&acc) {
                        *slot = a / count as f64;
                    }
                }
            }
        }
    }
    FeatureSequence {
        frames: out,
        frame_rate: features.frame_rate,
    }
}

/// Transposed-convolution head mirroring the backbone's single stride-2
/// stage: hidden rows `T/2 x H` back to feature rows `T x D`.
pub struct ReconstructionHead {
    tconv: TransposedConv1d,
}

impl ReconstructionHead {
    pub fn new(hidden_dim: usize, feature_dim: usize, prefix: &str) -> Self {
        Self {
            tconv: TransposedConv1d::new(format!("{prefix}head"), hidden_dim, feature_dim, 2, 2),
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        self.tconv.init(store, rng)
    }

    pub fn forward(&self, hidden: &Array2<f64>, p: &ParameterStore) -> Result<Array2<f64>> {
        self.tconv.forward(hidden, p)
    }

    pub fn backward(
        &self,
        hidden: &Array2<f64>,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        self.tconv.backward(hidden, dout, p, g)
    }
}

/// Pad to an even frame count by repeating the final frame.
pub fn pad_even(features: &FeatureSequence) -> FeatureSequence {
    let t = features.frames.nrows();
    if t % 2 == 0 {
        return features.clone();
    }
    let mut frames = Array2::zeros((t + 1, features.frames.ncols()));
    frames
        .slice_mut(ndarray::s![..t, ..])
        .assign(&features.frames);
    let last = features.frames.row(t - 1).to_owned();
    frames.row_mut(t).assign(&last);
    FeatureSequence {
        frames,
        frame_rate: features.frame_rate,
    }
}

/// Run the corrupted features through backbone and head. Odd-length inputs
/// are padded (final frame repeated) so the output matches the padded
/// shape; the caller trims if it wants the original length.
pub fn reconstruct(
    corrupted: &FeatureSequence,
    backbone: &BackboneModel,
    head: &ReconstructionHead,
    p: &ParameterStore,
) -> Result<FeatureSequence> {
    let padded = pad_even(corrupted);
    let (rec, _, _) = reconstruct_cached(&padded, backbone, head, p)?;
    Ok(FeatureSequence {
        frames: rec,
        frame_rate: corrupted.frame_rate,
    })
}

fn reconstruct_cached(
    padded: &FeatureSequence,
    backbone: &BackboneModel,
    head: &ReconstructionHead,
    p: &ParameterStore,
) -> Result<(Array2<f64>, BackboneCache, Array2<f64>)> {
    let (hidden, cache) = backbone.forward(&padded.frames, p)?;
    let rec = head.forward(&hidden, p)?;
    if rec.dim() != padded.frames.dim() {
        return Err(Error::Config(format!(
            "reconstruction shape {:?} does not match input {:?}",
            rec.dim(),
            padded.frames.dim()
        )));
    }
    Ok((rec, cache, hidden))
}

/// Mean absolute difference over the masked positions only (selected frames
/// times all feature dims). No masked frames means zero loss.
pub fn masked_l1_loss(
    original: &FeatureSequence,
    reconstructed: &FeatureSequence,
    spec: &MaskSpec,
) -> f64 {
    masked_l1(&original.frames, &reconstructed.frames, spec).0
}

fn masked_l1(original: &Array2<f64>, reconstructed: &Array2<f64>, spec: &MaskSpec) -> (f64, Array2<f64>) {
    assert_eq!(original.dim(), reconstructed.dim(), "shape mismatch");
    assert_eq!(spec.len(), original.nrows(), "mask length mismatch");
    let d = original.ncols();
    let count = spec.selected_count();
    let mut grad = Array2::zeros(original.raw_dim());
    if count == 0 {
        return (0.0, grad);
    }
    let norm = 1.0 / (count * d) as f64;
    let mut loss = 0.0;
    for (t, slot) in spec.slots.iter().enumerate() {
        if slot.is_none() {
            continue;
        }
        for j in 0..d {
            let diff = reconstructed[[t, j]] - original[[t, j]];
            loss += diff.abs() * norm;
            grad[[t, j]] = diff.signum() * norm;
        }
    }
    (loss, grad)
}

// ── Unsupervised trainer ─────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Defaults to Adam 1e-4 halved every 25 epochs.
    pub schedule: Option<LrSchedule>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            seed: 0,
            batch_size: 64,
            schedule: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PretrainReport {
    pub epoch_losses: Vec<f64>,
}

pub fn pretrain_checkpoint_meta(config: &BackboneConfig, epoch: usize) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("stage".to_string(), "pretrain".to_string()),
        ("backbone_config".to_string(), serde_json::to_string(config).unwrap()),
        ("epoch".to_string(), epoch.to_string()),
    ])
}

/// Pretrain a backbone on fixed feature sequences (the caller extracts them
/// from a frozen representation model): corrupt 15% of frames, reconstruct,
/// minimize masked L1. Gradients flow through backbone and head only.
/// Returns the trained parameters (names under `backbone.` and `head.`).
pub fn pretrain_backbone(
    features: &[FeatureSequence],
    config: &BackboneConfig,
    opts: &PretrainOptions,
) -> Result<(BackboneModel, ReconstructionHead, ParameterStore, PretrainReport)> {
    if features.is_empty() {
        return Err(Error::EmptyInput("no feature sequences to pretrain on".into()));
    }
    let backbone = BackboneModel::new(config.clone(), "backbone.")?;
    let head = ReconstructionHead::new(config.hidden_dim(), config.input_dim, "");
    let mut params = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "pretrain-init"));
    backbone.init(&mut params, &mut rng)?;
    head.init(&mut params, &mut rng)?;

    let padded: Vec<FeatureSequence> = features.iter().map(pad_even).collect();
    let schedule = opts
        .schedule
        .clone()
        .unwrap_or_else(|| LrSchedule::step_halving(1e-4, 25));
    let mut state = AdamState::default();
    let mut report = PretrainReport::default();

    let save = |params: &ParameterStore, epoch: usize| -> Result<()> {
        if let Some(dir) = &opts.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            save_checkpoint(
                params,
                &pretrain_checkpoint_meta(config, epoch),
                dir.join("backbone.ckpt"),
            )?;
        }
        Ok(())
    };
    save(&params, 0)?;

    let mut iteration = 0u64;
    for epoch in 1..=opts.epochs {
        let mut epoch_loss = 0.0;
        let mut scored = 0usize;
        for (batch_idx, batch) in padded.chunks(opts.batch_size).enumerate() {
            let mut grads = ParameterStore::new();
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for (item_idx, feats) in batch.iter().enumerate() {
                let mut mask_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    opts.seed,
                    &format!("mask-{epoch}-{batch_idx}-{item_idx}"),
                ));
                let spec = select_mask(feats.frames.nrows(), &mut mask_rng);
                let corrupted = apply_mask(feats, &spec, &mut mask_rng);
                let (rec, cache, hidden) =
                    reconstruct_cached(&corrupted, &backbone, &head, &params)?;
                let (loss, mut drec) = masked_l1(&feats.frames, &rec, &spec);
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "masked L1 became non-finite at epoch {epoch}; last checkpoint retained"
                    )));
                }
                drec *= scale;
                let dhidden = head.backward(&hidden, &drec, &params, &mut grads)?;
                backbone.backward(&cache, &dhidden, &params, &mut grads)?;
                batch_loss += loss * scale;
            }
            let lr = schedule.lr_at(iteration, (epoch - 1) as u64);
            adam_step(&mut params, &grads, &mut state, lr)?;
            log::debug!("pretrain epoch {epoch} batch {batch_idx} loss {batch_loss:.6} lr {lr:.3e}");
            epoch_loss += batch_loss * batch.len() as f64;
            scored += batch.len();
            iteration += 1;
        }
        report.epoch_losses.push(epoch_loss / scored as f64);
        save(&params, epoch)?;
    }
    Ok((backbone, head, params, report))
}
