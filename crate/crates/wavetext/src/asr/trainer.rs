//! Supervised CTC training over the experiment presets: handcrafted vs
//! learned features, optional pretrained backbone initialization, and
//! optional integrated optimization of the whole network.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asr::{
    ctc_loss, ctc_loss_grads, greedy_decode, BackboneConfig, BackboneModel, LogProbMatrix,
    PredictionLayer,
};
use crate::corpus::{compute_fbank, FeatureSequence, Utterance, Waveform};
use crate::error::{Error, Result};
use crate::nn::{adam_step, save_checkpoint, AdamState, LrSchedule, ParameterStore};
use crate::pretrain::pad_even;
use crate::srl::{SrlConfig, SrlModel};
use crate::vocab::Vocabulary;
use crate::{derive_seed, fnv1a64};
use rand::SeedableRng;

/// Training-strategy flags behind the experiment matrix names:
/// A-presets use handcrafted filterbank features, B-presets frozen learned
/// features, C1 adds backbone pretraining, C2 integrated optimization, and
/// C3/C4 both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preset {
    pub use_srl_features: bool,
    pub pretrained_backbone: bool,
    pub integrated: bool,
}

impl Preset {
    pub fn from_name(name: &str) -> Result<Self> {
        let preset = match name.to_ascii_uppercase().as_str() {
            "A1" | "A2" | "A3" => Self {
                use_srl_features: false,
                pretrained_backbone: false,
                integrated: false,
            },
            "B1" | "B2" | "B3" => Self {
                use_srl_features: true,
                pretrained_backbone: false,
                integrated: false,
            },
            "C1" => Self {
                use_srl_features: true,
                pretrained_backbone: true,
                integrated: false,
            },
            "C2" => Self {
                use_srl_features: true,
                pretrained_backbone: false,
                integrated: true,
            },
            "C3" | "C4" => Self {
                use_srl_features: true,
                pretrained_backbone: true,
                integrated: true,
            },
            other => {
                return Err(Error::Usage(format!(
                    "unknown preset {other:?} (expected A1-A3, B1-B3, C1-C4)"
                )))
            }
        };
        Ok(preset)
    }
}

/// The wave-to-feature front: either the handcrafted filterbank baseline or
/// the learned representation model.
pub enum FeatureExtractor {
    Fbank {
        n_mels: usize,
        win_ms: f64,
        hop_ms: f64,
    },
    Srl(SrlModel),
}

impl FeatureExtractor {
    pub fn dim(&self) -> usize {
        match self {
            Self::Fbank { n_mels, .. } => *n_mels,
            Self::Srl(model) => model.config.channels,
        }
    }

    pub fn extract(&self, wave: &Waveform, p: &ParameterStore) -> Result<FeatureSequence> {
        match self {
            Self::Fbank { n_mels, win_ms, hop_ms } => compute_fbank(wave, *n_mels, *win_ms, *hop_ms),
            Self::Srl(model) => model.features(wave, p),
        }
    }
}

/// The complete recognizer: feature extractor, backbone, prediction layer.
pub struct AsrModel {
    pub extractor: FeatureExtractor,
    pub backbone: BackboneModel,
    pub prediction: PredictionLayer,
}

impl AsrModel {
    /// Full inference path: features, pad to even, backbone, log-softmax
    /// prediction.
    pub fn logprobs(
        &self,
        wave: &Waveform,
        vocab: &Vocabulary,
        p: &ParameterStore,
    ) -> Result<LogProbMatrix> {
        let features = self.extractor.extract(wave, p)?;
        self.logprobs_from_features(&features, vocab, p)
    }

    pub fn logprobs_from_features(
        &self,
        features: &FeatureSequence,
        vocab: &Vocabulary,
        p: &ParameterStore,
    ) -> Result<LogProbMatrix> {
        let padded = pad_even(features);
        let (hidden, _) = self.backbone.forward(&padded.frames, p)?;
        let (lp, _) = self.prediction.forward(&hidden, vocab, p)?;
        Ok(lp)
    }

    pub fn transcribe_greedy(
        &self,
        wave: &Waveform,
        vocab: &Vocabulary,
        p: &ParameterStore,
    ) -> Result<String> {
        greedy_decode(&self.logprobs(wave, vocab, p)?, vocab)
    }
}

#[derive(Debug, Clone)]
pub struct AsrTrainOptions {
    pub preset: Preset,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Defaults to Adam 1e-4 halved every 25 epochs; integrated training
    /// prepends the 1000-iteration warmup from 1e-5.
    pub schedule: Option<LrSchedule>,
    /// Stop after this many epochs without a validation improvement
    /// (0 disables early stopping).
    pub patience: usize,
    pub fbank_mels: usize,
    pub fbank_win_ms: f64,
    pub fbank_hop_ms: f64,
    /// Directory receiving `asr.ckpt` whenever validation improves.
    pub checkpoint_dir: Option<PathBuf>,
    /// Evaluate training-set LER every N epochs (0 = never); used by the
    /// overfit harness.
    pub eval_train_ler_every: usize,
    /// Stop as soon as training-set LER hits zero.
    pub stop_at_zero_train_ler: bool,
}

impl Default for AsrTrainOptions {
    fn default() -> Self {
        Self {
            preset: Preset::from_name("B3").unwrap(),
            epochs: 50,
            batch_size: 8,
            seed: 0,
            schedule: None,
            patience: 0,
            fbank_mels: 40,
            fbank_win_ms: 25.0,
            fbank_hop_ms: 10.0,
            checkpoint_dir: None,
            eval_train_ler_every: 0,
            stop_at_zero_train_ler: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AsrTrainReport {
    /// Mean per-utterance CTC loss (per label token) on the training set.
    pub train_losses: Vec<f64>,
    /// Same metric on the validation set, once per epoch.
    pub val_losses: Vec<f64>,
    /// 1-based epoch of the best validation loss (0 when never evaluated).
    pub best_epoch: usize,
    /// `(epoch, training-set LER)` history from the overfit harness.
    pub train_ler: Vec<(usize, f64)>,
    pub stopped_early: bool,
}

pub fn asr_checkpoint_meta(
    preset: &Preset,
    extractor: &FeatureExtractor,
    backbone_config: &BackboneConfig,
    vocab: &Vocabulary,
) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::from([
        ("stage".to_string(), "asr".to_string()),
        ("preset".to_string(), serde_json::to_string(preset).unwrap()),
        (
            "backbone_config".to_string(),
            serde_json::to_string(backbone_config).unwrap(),
        ),
        ("vocab_hash".to_string(), vocab_hash(vocab)),
    ]);
    match extractor {
        FeatureExtractor::Fbank { n_mels, win_ms, hop_ms } => {
            meta.insert("features".to_string(), "fbank".to_string());
            meta.insert(
                "fbank".to_string(),
                serde_json::to_string(&(n_mels, win_ms, hop_ms)).unwrap(),
            );
        }
        FeatureExtractor::Srl(model) => {
            meta.insert("features".to_string(), "srl".to_string());
            meta.insert(
                "srl_config".to_string(),
                serde_json::to_string(&model.config).unwrap(),
            );
        }
    }
    meta
}

pub fn vocab_hash(vocab: &Vocabulary) -> String {
    let joined: String = (0..vocab.len())
        .map(|i| vocab.symbol(i).unwrap())
        .collect::<Vec<_>>()
        .join("\n");
    format!("{:016x}", fnv1a64(joined.as_bytes()))
}

struct PreparedItem {
    wave_index: usize,
    label: Vec<usize>,
    /// Fixed features when the extractor is frozen (everything but
    /// integrated training).
    features: Option<FeatureSequence>,
}

/// Train the recognizer on transcribed utterances.
///
/// `srl` supplies the representation model and its parameters (required
/// whenever the preset uses learned features); `backbone_init` supplies
/// pretrained backbone parameters (required when the preset says so). When
/// the preset is not integrated the SRL parameters are carried through to
/// the checkpoint untouched, receiving no gradient. Returns the parameters
/// of the best validation epoch.
pub fn train_asr(
    train: &[(Utterance, Waveform)],
    dev: &[(Utterance, Waveform)],
    vocab: &Vocabulary,
    srl: Option<(SrlModel, ParameterStore)>,
    backbone_init: Option<&ParameterStore>,
    backbone_config: BackboneConfig,
    opts: &AsrTrainOptions,
) -> Result<(AsrModel, ParameterStore, AsrTrainReport)> {
    let preset = opts.preset;
    if train.is_empty() {
        return Err(Error::Config("training manifest is empty".into()));
    }
    if preset.integrated && !preset.use_srl_features {
        return Err(Error::Config(
            "integrated optimization requires learned features".into(),
        ));
    }

    let mut params = ParameterStore::new();
    let extractor = if preset.use_srl_features {
        let (model, srl_params) = srl.ok_or_else(|| {
            Error::Config("this preset uses learned features but no SRL checkpoint was given".into())
        })?;
        params.absorb(srl_params)?;
        FeatureExtractor::Srl(model)
    } else {
        FeatureExtractor::Fbank {
            n_mels: opts.fbank_mels,
            win_ms: opts.fbank_win_ms,
            hop_ms: opts.fbank_hop_ms,
        }
    };
    if extractor.dim() != backbone_config.input_dim {
        return Err(Error::Config(format!(
            "backbone expects {}-dim features but the extractor produces {}",
            backbone_config.input_dim,
            extractor.dim()
        )));
    }

    let backbone = BackboneModel::new(backbone_config.clone(), "backbone.")?;
    let prediction = PredictionLayer::new(backbone_config.hidden_dim(), vocab.len(), "");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "asr-init"));
    backbone.init(&mut params, &mut rng)?;
    prediction.init(&mut params, &mut rng)?;

    if preset.pretrained_backbone {
        let init = backbone_init.ok_or_else(|| {
            Error::Config("this preset starts from a pretrained backbone but none was given".into())
        })?;
        let backbone_names: Vec<String> = params
            .names()
            .filter(|n| n.starts_with("backbone."))
            .map(str::to_string)
            .collect();
        for name in backbone_names {
            let src = init.get(&name).ok_or_else(|| {
                Error::Config(format!("pretrained backbone checkpoint lacks {name}"))
            })?;
            let dst = params.get_mut(&name).unwrap();
            if dst.shape() != src.shape() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: dst.shape().to_vec(),
                    got: src.shape().to_vec(),
                });
            }
            dst.assign(src);
        }
    }

    let model = AsrModel {
        extractor,
        backbone,
        prediction,
    };

    let prepare = |set: &[(Utterance, Waveform)], what: &str| -> Result<Vec<PreparedItem>> {
        let mut items = Vec::new();
        for (i, (utt, wave)) in set.iter().enumerate() {
            let text = utt.text.as_deref().ok_or_else(|| {
                Error::Config(format!("{what} utterance {} has no transcript", utt.id))
            })?;
            if text.trim().is_empty() {
                return Err(Error::Config(format!(
                    "{what} utterance {} has an empty transcript",
                    utt.id
                )));
            }
            let label = vocab.encode(text);
            let features = match &model.extractor {
                FeatureExtractor::Srl(_) if preset.integrated => None,
                extractor => Some(extractor.extract(wave, &params)?),
            };
            // Frames after padding and the stride-2 stage.
            let t_frames = match &model.extractor {
                FeatureExtractor::Srl(m) => m.latent_len(wave.len()).ok_or(Error::TooShort {
                    needed: m.min_input_samples(),
                    got: wave.len(),
                })?,
                FeatureExtractor::Fbank { .. } => features.as_ref().unwrap().frames.nrows(),
            };
            let t_out = (t_frames + t_frames % 2) / 2;
            let repeats = label.windows(2).filter(|w| w[0] == w[1]).count();
            if label.len() + repeats > t_out {
                log::warn!(
                    "skipping {} ({what}): label needs {} frames but only {t_out} are available",
                    utt.id,
                    label.len() + repeats
                );
                continue;
            }
            items.push(PreparedItem {
                wave_index: i,
                label,
                features,
            });
        }
        Ok(items)
    };
    let train_items = prepare(train, "train")?;
    let dev_items = prepare(dev, "dev")?;
    if train_items.is_empty() {
        return Err(Error::Config(
            "no training utterance is long enough for its transcript".into(),
        ));
    }

    let schedule = opts.schedule.clone().unwrap_or_else(|| {
        if preset.integrated {
            LrSchedule::step_halving_with_warmup(1000, 1e-5, 1e-4, 25)
        } else {
            LrSchedule::step_halving(1e-4, 25)
        }
    });

    let forward_loss = |params: &ParameterStore,
                        item: &PreparedItem,
                        set: &[(Utterance, Waveform)]|
     -> Result<f64> {
        let wave = &set[item.wave_index].1;
        let lp = match &item.features {
            Some(f) => model.logprobs_from_features(f, vocab, params)?,
            None => model.logprobs(wave, vocab, params)?,
        };
        Ok(ctc_loss(&lp, &item.label)? / item.label.len() as f64)
    };
    let mean_loss = |params: &ParameterStore,
                     items: &[PreparedItem],
                     set: &[(Utterance, Waveform)]|
     -> Result<f64> {
        if items.is_empty() {
            return Ok(f64::NAN);
        }
        let mut total = 0.0;
        for item in items {
            total += forward_loss(params, item, set)?;
        }
        Ok(total / items.len() as f64)
    };

    let mut state = AdamState::default();
    let mut report = AsrTrainReport::default();
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut since_best = 0usize;
    let mut iteration = 0u64;

    let durations: Vec<f64> = train_items
        .iter()
        .map(|it| train[it.wave_index].0.duration)
        .collect();

    'training: for epoch in 1..=opts.epochs {
        let batches = crate::corpus::make_batch_indices(&durations, epoch as u64, opts.batch_size, opts.seed);
        let mut epoch_loss = 0.0;
        let mut scored = 0usize;
        for batch in batches {
            let mut grads = ParameterStore::new();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &item_idx in &batch {
                let item = &train_items[item_idx];
                let wave = &train[item.wave_index].1;
                let loss = match &model.extractor {
                    FeatureExtractor::Srl(srl_model) if preset.integrated => {
                        let (z, enc_cache) = srl_model.forward_encoder(wave, &params)?;
                        let (c, ctx_cache) = srl_model.forward_context(&z, &params)?;
                        let features = FeatureSequence {
                            frames: c.frames.clone(),
                            frame_rate: 0.0,
                        };
                        let padded = pad_even(&features);
                        let (hidden, bb_cache) = model.backbone.forward(&padded.frames, &params)?;
                        let (lp, pred_cache) = model.prediction.forward(&hidden, vocab, &params)?;
                        let (loss, mut dlp) = ctc_loss_grads(&lp, &item.label)?;
                        dlp *= scale / item.label.len() as f64;
                        let dhidden =
                            model.prediction.backward(&pred_cache, &dlp, &params, &mut grads)?;
                        let dpadded =
                            model.backbone.backward(&bb_cache, &dhidden, &params, &mut grads)?;
                        let dc = unpad_grad(&dpadded, features.frames.nrows());
                        let dz =
                            srl_model.backward_context(&ctx_cache, &dc, &params, &mut grads)?;
                        srl_model.backward_encoder(&enc_cache, &dz, &params, &mut grads)?;
                        loss / item.label.len() as f64
                    }
                    _ => {
                        let features = item.features.as_ref().expect("frozen features are cached");
                        let padded = pad_even(features);
                        let (hidden, bb_cache) = model.backbone.forward(&padded.frames, &params)?;
                        let (lp, pred_cache) = model.prediction.forward(&hidden, vocab, &params)?;
                        let (loss, mut dlp) = ctc_loss_grads(&lp, &item.label)?;
                        dlp *= scale / item.label.len() as f64;
                        let dhidden =
                            model.prediction.backward(&pred_cache, &dlp, &params, &mut grads)?;
                        model.backbone.backward(&bb_cache, &dhidden, &params, &mut grads)?;
                        loss / item.label.len() as f64
                    }
                };
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "CTC loss became non-finite at epoch {epoch}; best checkpoint retained"
                    )));
                }
                batch_loss += loss;
            }
            let lr = schedule.lr_at(iteration, (epoch - 1) as u64);
            adam_step(&mut params, &grads, &mut state, lr)?;
            epoch_loss += batch_loss;
            scored += batch.len();
            iteration += 1;
        }
        let train_loss = epoch_loss / scored as f64;
        report.train_losses.push(train_loss);

        let val_loss = if dev_items.is_empty() {
            train_loss
        } else {
            mean_loss(&params, &dev_items, dev)?
        };
        report.val_losses.push(val_loss);
        log::info!("asr epoch {epoch}: train {train_loss:.4} val {val_loss:.4}");

        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            report.best_epoch = epoch;
            since_best = 0;
            if let Some(dir) = &opts.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                save_checkpoint(
                    &best_params,
                    &asr_checkpoint_meta(&preset, &model.extractor, &backbone_config, vocab),
                    dir.join("asr.ckpt"),
                )?;
            }
        } else {
            since_best += 1;
            if opts.patience > 0 && since_best >= opts.patience {
                report.stopped_early = true;
                break 'training;
            }
        }

        if opts.eval_train_ler_every > 0 && epoch % opts.eval_train_ler_every == 0 {
            let mut pairs = Vec::new();
            for item in &train_items {
                let (utt, wave) = &train[item.wave_index];
                let lp = match &item.features {
                    Some(f) => model.logprobs_from_features(f, vocab, &params)?,
                    None => model.logprobs(wave, vocab, &params)?,
                };
                pairs.push((
                    utt.text.clone().unwrap_or_default(),
                    greedy_decode(&lp, vocab)?,
                ));
            }
            let ler = crate::eval::ler(&pairs).ler;
            report.train_ler.push((epoch, ler));
            log::info!("asr epoch {epoch}: train LER {ler:.4}");
            if opts.stop_at_zero_train_ler && ler == 0.0 {
                // Keep the overfit parameters rather than the best-val ones.
                best_params = params.clone();
                if report.best_epoch == 0 {
                    report.best_epoch = epoch;
                }
                break 'training;
            }
        }
    }

    Ok((model, best_params, report))
}

/// Fold the gradient of a repeated padding row back onto the final real row.
fn unpad_grad(dpadded: &Array2<f64>, real_rows: usize) -> Array2<f64> {
    if dpadded.nrows() == real_rows {
        return dpadded.clone();
    }
    let mut d = dpadded.slice(s![..real_rows, ..]).to_owned();
    let pad_row = dpadded.row(real_rows).to_owned();
    let mut last = d.row_mut(real_rows - 1);
    last += &pad_row;
    d
}

/// Rebuild a recognizer and its parameters from a checkpoint written by
/// [`train_asr`]. The vocabulary must hash to the value stored at save
/// time.
pub fn load_asr_checkpoint(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
) -> Result<(AsrModel, ParameterStore)> {
    let (params, meta) = crate::nn::load_checkpoint(&path)?;
    let stored_hash = meta
        .get("vocab_hash")
        .ok_or_else(|| Error::Integrity("checkpoint lacks vocab_hash".into()))?;
    if stored_hash != &vocab_hash(vocab) {
        return Err(Error::Config(
            "vocabulary does not match the one this checkpoint was trained with".into(),
        ));
    }
    let backbone_config: BackboneConfig = meta
        .get("backbone_config")
        .ok_or_else(|| Error::Integrity("checkpoint lacks backbone_config".into()))
        .and_then(|s| serde_json::from_str(s).map_err(Error::from))?;
    let extractor = match meta.get("features").map(String::as_str) {
        Some("fbank") => {
            let (n_mels, win_ms, hop_ms): (usize, f64, f64) = meta
                .get("fbank")
                .ok_or_else(|| Error::Integrity("checkpoint lacks fbank settings".into()))
                .and_then(|s| serde_json::from_str(s).map_err(Error::from))?;
            FeatureExtractor::Fbank { n_mels, win_ms, hop_ms }
        }
        Some("srl") => {
            let config: SrlConfig = meta
                .get("srl_config")
                .ok_or_else(|| Error::Integrity("checkpoint lacks srl_config".into()))
                .and_then(|s| serde_json::from_str(s).map_err(Error::from))?;
            FeatureExtractor::Srl(SrlModel::new(config, "srl.")?)
        }
        other => {
            return Err(Error::Integrity(format!(
                "checkpoint has unknown feature kind {other:?}"
            )))
        }
    };
    let backbone = BackboneModel::new(backbone_config.clone(), "backbone.")?;
    let prediction = PredictionLayer::new(backbone_config.hidden_dim(), vocab.len(), "");
    Ok((
        AsrModel {
            extractor,
            backbone,
            prediction,
        },
        params,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use crate::srl::SrlConfig;
    use rand::RngExt;

    fn tone_wave(freqs: &[f64], seconds_per: f64, seed: u64) -> Waveform {
        let rate = 16_000u32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for &f in freqs {
            let n = (seconds_per * rate as f64) as usize;
            for i in 0..n {
                let t = i as f64 / rate as f64;
                samples.push(
                    0.6 * (2.0 * std::f64::consts::PI * f * t).sin()
                        + rng.random_range(-0.02..0.02),
                );
            }
        }
        Waveform { samples, sample_rate: rate }
    }

    fn toy_set(vocab_texts: &[&str], n: usize, seed: u64) -> Vec<(Utterance, Waveform)> {
        // Two-symbol alphabet: A = 500 Hz, B = 1200 Hz.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let text = vocab_texts[rng.random_range(0..vocab_texts.len())].to_string();
                let freqs: Vec<f64> = text
                    .chars()
                    .map(|c| if c == 'A' { 500.0 } else { 1200.0 })
                    .collect();
                let wave = tone_wave(&freqs, 0.18, seed * 1000 + i as u64);
                let utt = Utterance {
                    id: format!("u{i}"),
                    audio_path: String::new(),
                    duration: wave.duration_seconds(),
                    text: Some(text),
                    lang: Language::En,
                };
                (utt, wave)
            })
            .collect()
    }

    fn small_srl(seed: u64) -> (SrlModel, ParameterStore) {
        let model = SrlModel::new(SrlConfig::small(), "srl.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.init(&mut params, &mut rng).unwrap();
        (model, params)
    }

    #[test]
    fn preset_names_map_to_the_experiment_matrix() {
        for (name, flags) in [
            ("A3", (false, false, false)),
            ("B3", (true, false, false)),
            ("C1", (true, true, false)),
            ("C2", (true, false, true)),
            ("C3", (true, true, true)),
        ] {
            let p = Preset::from_name(name).unwrap();
            assert_eq!(
                (p.use_srl_features, p.pretrained_backbone, p.integrated),
                flags,
                "{name}"
            );
        }
        assert!(matches!(Preset::from_name("Z9"), Err(Error::Usage(_))));
    }

    #[test]
    fn missing_srl_checkpoint_is_a_configuration_error() {
        let vocab = Vocabulary::build(["AB"]);
        let set = toy_set(&["AB"], 2, 1);
        let err = train_asr(
            &set,
            &[],
            &vocab,
            None,
            None,
            BackboneConfig::small(16),
            &AsrTrainOptions {
                preset: Preset::from_name("B3").unwrap(),
                epochs: 1,
                ..Default::default()
            },
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_transcript_is_a_configuration_error() {
        let vocab = Vocabulary::build(["AB"]);
        let mut set = toy_set(&["AB"], 2, 2);
        set[0].0.text = None;
        let (srl, srl_params) = small_srl(3);
        let err = train_asr(
            &set,
            &[],
            &vocab,
            Some((srl, srl_params)),
            None,
            BackboneConfig::small(16),
            &AsrTrainOptions {
                preset: Preset::from_name("B3").unwrap(),
                epochs: 1,
                ..Default::default()
            },
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn frozen_preset_leaves_srl_parameters_bit_identical() {
        let vocab = Vocabulary::build(["AB"]);
        let set = toy_set(&["AB", "BA", "A"], 4, 4);
        let (srl, srl_params) = small_srl(5);
        let before: Vec<(String, Vec<u64>)> = srl_params
            .iter()
            .map(|(n, a)| (n.to_string(), a.iter().map(|v| v.to_bits()).collect()))
            .collect();
        let (_, params, _) = train_asr(
            &set,
            &set[..1],
            &vocab,
            Some((srl, srl_params)),
            None,
            BackboneConfig::small(16),
            &AsrTrainOptions {
                preset: Preset::from_name("B3").unwrap(),
                epochs: 2,
                batch_size: 2,
                ..Default::default()
            },
        )
        .unwrap();
        for (name, bits) in before {
            let after: Vec<u64> = params.get(&name).unwrap().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, after, "{name} changed despite the freeze");
        }
    }

    #[test]
    fn integrated_preset_updates_srl_parameters() {
        let vocab = Vocabulary::build(["AB"]);
        let set = toy_set(&["AB", "BA"], 3, 6);
        let (srl, srl_params) = small_srl(7);
        let before = srl_params.get("srl.enc0.w").unwrap().clone();
        let (_, params, _) = train_asr(
            &set,
            &[],
            &vocab,
            Some((srl, srl_params)),
            None,
            BackboneConfig::small(16),
            &AsrTrainOptions {
                preset: Preset::from_name("C2").unwrap(),
                epochs: 1,
                batch_size: 2,
                // No warmup so the first steps actually move parameters.
                schedule: Some(LrSchedule::step_halving(1e-3, 25)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(&before, params.get("srl.enc0.w").unwrap());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let vocab = Vocabulary::build(["AB"]);
        let set = toy_set(&["AB", "B"], 4, 8);
        let run = || {
            let (srl, srl_params) = small_srl(9);
            let (_, _, report) = train_asr(
                &set,
                &set[..2],
                &vocab,
                Some((srl, srl_params)),
                None,
                BackboneConfig::small(16),
                &AsrTrainOptions {
                    preset: Preset::from_name("B3").unwrap(),
                    epochs: 3,
                    batch_size: 2,
                    seed: 11,
                    ..Default::default()
                },
            )
            .unwrap();
            report.val_losses
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_vocab_hash_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = Vocabulary::build(["AB"]);
        let set = toy_set(&["AB"], 2, 12);
        let (srl, srl_params) = small_srl(13);
        train_asr(
            &set,
            &[],
            &vocab,
            Some((srl, srl_params)),
            None,
            BackboneConfig::small(16),
            &AsrTrainOptions {
                preset: Preset::from_name("B3").unwrap(),
                epochs: 1,
                checkpoint_dir: Some(dir.path().to_path_buf()),
                ..Default::default()
            },
        )
        .unwrap();
        let path = dir.path().join("asr.ckpt");
        assert!(load_asr_checkpoint(&path, &vocab).is_ok());
        let other = Vocabulary::build(["ABC"]);
        assert!(matches!(
            load_asr_checkpoint(&path, &other).err().unwrap(),
            Error::Config(_)
        ));
    }
}
