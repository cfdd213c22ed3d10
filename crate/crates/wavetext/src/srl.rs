//! Speech representation learning: a convolutional feature encoder, a
//! causal convolutional context decoder, per-step discriminators, and the
//! contrastive objective that tells true future latents from negatives
//! drawn inside the same sequence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSequence, Waveform};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, layers::sigmoid, relu, relu_backward, save_checkpoint, AdamState, Affine, Conv1d,
    LayerNorm, LayerNormCache, LrSchedule, ParameterStore,
};
use crate::{corpus, derive_seed};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SrlConfig {
    /// Channel width of every encoder/context layer; also the latent dim D.
    pub channels: usize,
    pub encoder_kernels: Vec<usize>,
    pub encoder_strides: Vec<usize>,
    pub context_layers: usize,
    pub context_kernel: usize,
    /// k: how many future steps each context vector must predict.
    pub prediction_steps: usize,
    /// Negatives per (step, position) term of the loss.
    pub negatives: usize,
    pub chunk_seconds: f64,
}

impl Default for SrlConfig {
    fn default() -> Self {
        Self {
            channels: 512,
            encoder_kernels: vec![10, 8, 4, 4, 4],
            encoder_strides: vec![5, 4, 2, 2, 2],
            context_layers: 9,
            context_kernel: 3,
            prediction_steps: 12,
            negatives: 10,
            chunk_seconds: 10.0,
        }
    }
}

impl SrlConfig {
    /// Same topology as the default but narrow enough for CPU tests.
    pub fn small() -> Self {
        Self {
            channels: 16,
            context_layers: 3,
            prediction_steps: 3,
            negatives: 2,
            chunk_seconds: 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0
            || self.prediction_steps == 0
            || self.negatives == 0
            || self.context_layers == 0
            || self.context_kernel == 0
        {
            return Err(Error::Config("SRL dimensions must all be positive".into()));
        }
        if self.encoder_kernels.len() != self.encoder_strides.len()
            || self.encoder_kernels.is_empty()
        {
            return Err(Error::Config(
                "encoder kernels and strides must be equal-length and non-empty".into(),
            ));
        }
        if self.encoder_strides.iter().any(|&s| s == 0) {
            return Err(Error::Config("encoder strides must be at least 1".into()));
        }
        Ok(())
    }

    /// Total temporal downsampling of the encoder.
    pub fn stride_product(&self) -> usize {
        self.encoder_strides.iter().product()
    }
}

/// Frame-wise latent rows produced by the encoder (`T x D`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub frames: Array2<f64>,
}

/// Causal summaries aligned one-to-one with the latent rows: row t depends
/// only on latent rows `..=t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSequence {
    pub frames: Array2<f64>,
}

struct ConvBlock {
    conv: Conv1d,
    norm: LayerNorm,
}

struct BlockCache {
    input: Array2<f64>,
    pre_relu: Array2<f64>,
    norm: LayerNormCache,
}

impl ConvBlock {
    fn forward(&self, x: &Array2<f64>, p: &ParameterStore) -> Result<(Array2<f64>, BlockCache)> {
        let a = self.conv.forward(x, p)?;
        let r = relu(&a);
        let (y, norm) = self.norm.forward(&r, p)?;
        Ok((
            y,
            BlockCache {
                input: x.clone(),
                pre_relu: a,
                norm,
            },
        ))
    }

    fn backward(
        &self,
        cache: &BlockCache,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let dr = self.norm.backward(&cache.norm, dout, p, g)?;
        let da = relu_backward(&cache.pre_relu, &dr);
        self.conv.backward(&cache.input, &da, p, g)
    }
}

pub struct SrlModel {
    pub config: SrlConfig,
    prefix: String,
    encoder: Vec<ConvBlock>,
    context: Vec<ConvBlock>,
    discriminators: Vec<Affine>,
}

pub(crate) struct EncoderCache(Vec<BlockCache>);
pub(crate) struct ContextCache(Vec<BlockCache>);

impl SrlModel {
    pub fn new(config: SrlConfig, prefix: &str) -> Result<Self> {
        config.validate()?;
        let d = config.channels;
        let mut encoder = Vec::new();
        for (i, (&k, &s)) in config
            .encoder_kernels
            .iter()
            .zip(&config.encoder_strides)
            .enumerate()
        {
            let in_ch = if i == 0 { 1 } else { d };
            encoder.push(ConvBlock {
                conv: Conv1d::new(format!("{prefix}enc{i}"), in_ch, d, k, s, 0),
                norm: LayerNorm::new(format!("{prefix}enc{i}.ln"), d),
            });
        }
        let mut context = Vec::new();
        for i in 0..config.context_layers {
            context.push(ConvBlock {
                conv: Conv1d::causal(format!("{prefix}ctx{i}"), d, d, config.context_kernel),
                norm: LayerNorm::new(format!("{prefix}ctx{i}.ln"), d),
            });
        }
        let discriminators = (0..config.prediction_steps)
            .map(|s| Affine::new(format!("{prefix}disc{s}"), d, d))
            .collect();
        Ok(Self {
            config,
            prefix: prefix.to_string(),
            encoder,
            context,
            discriminators,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        for block in self.encoder.iter().chain(&self.context) {
            block.conv.init(store, rng)?;
            block.norm.init(store)?;
        }
        for disc in &self.discriminators {
            disc.init(store, rng)?;
        }
        Ok(())
    }

    /// Smallest wave length for which every encoder layer emits at least one
    /// row (the receptive field of a single output).
    pub fn min_input_samples(&self) -> usize {
        let mut needed = 1usize;
        for (&k, &s) in self
            .config
            .encoder_kernels
            .iter()
            .zip(&self.config.encoder_strides)
            .rev()
        {
            needed = (needed - 1) * s + k;
        }
        needed
    }

    /// Number of latent rows the encoder produces for `samples` input
    /// samples, per the conv length recurrence.
    pub fn latent_len(&self, samples: usize) -> Option<usize> {
        let mut t = samples;
        for block in &self.encoder {
            t = block.conv.out_len(t)?;
        }
        Some(t)
    }

    pub(crate) fn forward_encoder(
        &self,
        wave: &Waveform,
        p: &ParameterStore,
    ) -> Result<(LatentSequence, EncoderCache)> {
        let needed = self.min_input_samples();
        if wave.len() < needed {
            return Err(Error::TooShort {
                needed,
                got: wave.len(),
            });
        }
        let mut x = Array2::from_shape_vec((wave.len(), 1), wave.samples.clone()).unwrap();
        let mut caches = Vec::with_capacity(self.encoder.len());
        for block in &self.encoder {
            let (y, cache) = block.forward(&x, p)?;
            caches.push(cache);
            x = y;
        }
        Ok((LatentSequence { frames: x }, EncoderCache(caches)))
    }

    pub(crate) fn backward_encoder(
        &self,
        cache: &EncoderCache,
        dz: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<()> {
        let mut d = dz.clone();
        for (block, cache) in self.encoder.iter().zip(&cache.0).rev() {
            d = block.backward(cache, &d, p, g)?;
        }
        Ok(())
    }

    /// Encoder forward pass alone: wave to latent rows.
    pub fn encode_frames(&self, wave: &Waveform, p: &ParameterStore) -> Result<LatentSequence> {
        self.forward_encoder(wave, p).map(|(z, _)| z)
    }

    pub(crate) fn forward_context(
        &self,
        z: &LatentSequence,
        p: &ParameterStore,
    ) -> Result<(ContextSequence, ContextCache)> {
        let mut x = z.frames.clone();
        let mut caches = Vec::with_capacity(self.context.len());
        for block in &self.context {
            let (y, cache) = block.forward(&x, p)?;
            caches.push(cache);
            x = y;
        }
        Ok((ContextSequence { frames: x }, ContextCache(caches)))
    }

    pub(crate) fn backward_context(
        &self,
        cache: &ContextCache,
        dc: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let mut d = dc.clone();
        for (block, cache) in self.context.iter().zip(&cache.0).rev() {
            d = block.backward(cache, &d, p, g)?;
        }
        Ok(d)
    }

    /// Causal contextualization: row t of the output summarizes latent rows
    /// `..=t` and is exactly invariant to later rows.
    pub fn contextualize(&self, z: &LatentSequence, p: &ParameterStore) -> Result<ContextSequence> {
        self.forward_context(z, p).map(|(c, _)| c)
    }

    /// The feature path consumed by the recognizer: encode then
    /// contextualize.
    pub fn features(&self, wave: &Waveform, p: &ParameterStore) -> Result<FeatureSequence> {
        let z = self.encode_frames(wave, p)?;
        let c = self.contextualize(&z, p)?;
        Ok(FeatureSequence {
            frames: c.frames,
            frame_rate: wave.sample_rate as f64 / self.config.stride_product() as f64,
        })
    }

    /// Contrastive loss over one sequence.
    ///
    /// For each step s = 1..=k and position i, the discriminator h_s must
    /// assign a high logit to the true future latent `z[i+s]` against
    /// `negatives` latents drawn uniformly from the other time steps of the
    /// same sequence (one draw per negative, skipping the positive index;
    /// the expectation term is weighted by the draw count, i.e. summed).
    /// Log-sigmoids are evaluated in the stable `-softplus(-x)` form.
    pub fn contrastive_loss(
        &self,
        z: &LatentSequence,
        c: &ContextSequence,
        p: &ParameterStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        self.contrastive_inner(z, c, p, None, rng).map(|(l, ..)| l)
    }

    /// Loss plus gradients with respect to z, c, and the discriminator
    /// parameters (accumulated into `g`).
    pub(crate) fn contrastive_loss_grads(
        &self,
        z: &LatentSequence,
        c: &ContextSequence,
        p: &ParameterStore,
        g: &mut ParameterStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Array2<f64>, Array2<f64>)> {
        let (loss, dz, dc) = self.contrastive_inner(z, c, p, Some(g), rng)?;
        Ok((loss, dz.unwrap(), dc.unwrap()))
    }

    #[allow(clippy::type_complexity)]
    fn contrastive_inner(
        &self,
        z: &LatentSequence,
        c: &ContextSequence,
        p: &ParameterStore,
        mut g: Option<&mut ParameterStore>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Option<Array2<f64>>, Option<Array2<f64>>)> {
        let t_len = z.frames.nrows();
        let k = self.config.prediction_steps;
        let lambda = self.config.negatives;
        if k >= t_len {
            return Err(Error::Config(format!(
                "prediction steps k={k} requires a sequence longer than {k} rows, got {t_len}"
            )));
        }
        assert_eq!(z.frames.dim(), c.frames.dim(), "z and c must align");

        let want_grads = g.is_some();
        let mut dz = want_grads.then(|| Array2::zeros(z.frames.raw_dim()));
        let mut dc = want_grads.then(|| Array2::zeros(c.frames.raw_dim()));

        let mut loss = 0.0;
        for (s_idx, disc) in self.discriminators.iter().enumerate() {
            let step = s_idx + 1;
            // h_s applied to every context row at once.
            let hc = disc.forward(&c.frames, p)?;
            let mut dhc = want_grads.then(|| Array2::zeros(hc.raw_dim()));
            for i in 0..t_len - step {
                let pos = i + step;
                let pos_logit = z.frames.row(pos).dot(&hc.row(i));
                loss -= log_sigmoid(pos_logit);
                if let (Some(dz), Some(dhc)) = (dz.as_mut(), dhc.as_mut()) {
                    let gl = sigmoid(pos_logit) - 1.0;
                    dz.row_mut(pos).scaled_add(gl, &hc.row(i));
                    dhc.row_mut(i).scaled_add(gl, &z.frames.row(pos));
                }
                for _ in 0..lambda {
                    // Uniform over time steps of this sequence, skipping the
                    // positive index.
                    let mut idx = rng.random_range(0..t_len - 1);
                    if idx >= pos {
                        idx += 1;
                    }
                    let neg_logit = z.frames.row(idx).dot(&hc.row(i));
                    loss -= log_sigmoid(-neg_logit);
                    if let (Some(dz), Some(dhc)) = (dz.as_mut(), dhc.as_mut()) {
                        let gl = sigmoid(neg_logit);
                        dz.row_mut(idx).scaled_add(gl, &hc.row(i));
                        dhc.row_mut(i).scaled_add(gl, &z.frames.row(idx));
                    }
                }
            }
            if let (Some(g), Some(dhc)) = (g.as_deref_mut(), dhc.as_ref()) {
                let dc_step = disc.backward(&c.frames, dhc, p, g)?;
                *dc.as_mut().unwrap() += &dc_step;
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "contrastive loss".into(),
            });
        }
        Ok((loss, dz, dc))
    }
}

/// `log(sigmoid(x))` computed without overflow for large |x|.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

// ── Self-supervised trainer ──────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SrlTrainOptions {
    pub epochs: usize,
    pub seed: u64,
    /// Defaults to the cosine-with-warmup schedule when absent.
    pub schedule: Option<LrSchedule>,
    /// Directory receiving `srl.ckpt` after every epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SrlTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            seed: 0,
            schedule: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SrlTrainReport {
    pub iteration_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

pub fn srl_checkpoint_meta(config: &SrlConfig, epoch: usize, seed: u64) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("stage".to_string(), "srl".to_string()),
        ("config".to_string(), serde_json::to_string(config).unwrap()),
        ("epoch".to_string(), epoch.to_string()),
        ("seed".to_string(), seed.to_string()),
    ])
}

/// Train the representation learner on unlabeled chunks.
///
/// Waves are concatenated and chunked per the corpus policy, the model is
/// optimized with Adam under the cosine-with-warmup schedule, a checkpoint
/// is written after every epoch, and a non-finite loss aborts with the last
/// epoch's checkpoint still on disk.
pub fn train_srl(
    waves: &[Waveform],
    config: &SrlConfig,
    opts: &SrlTrainOptions,
) -> Result<(SrlModel, ParameterStore, SrlTrainReport)> {
    let chunks = corpus::chunk_for_srl(waves, config.chunk_seconds)?;
    if chunks.is_empty() {
        return Err(Error::EmptyInput("no usable chunks for training".into()));
    }
    let model = SrlModel::new(config.clone(), "srl.")?;
    let usable: Vec<&Waveform> = chunks
        .iter()
        .filter(|w| {
            model
                .latent_len(w.len())
                .is_some_and(|t| t > config.prediction_steps)
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyInput(
            "every chunk is shorter than the encoder receptive field".into(),
        ));
    }

    let mut params = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "srl-init"));
    model.init(&mut params, &mut rng)?;

    let total_iters = (opts.epochs * usable.len()) as u64;
    let schedule = opts
        .schedule
        .clone()
        .unwrap_or_else(|| LrSchedule::srl_default(total_iters.max(1)));

    let mut state = AdamState::default();
    let mut report = SrlTrainReport::default();
    let mut iteration = 0u64;

    let save = |params: &ParameterStore, epoch: usize| -> Result<()> {
        if let Some(dir) = &opts.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            save_checkpoint(
                params,
                &srl_checkpoint_meta(config, epoch, opts.seed),
                dir.join("srl.ckpt"),
            )?;
        }
        Ok(())
    };
    save(&params, 0)?;

    for epoch in 1..=opts.epochs {
        let mut epoch_loss = 0.0;
        for (chunk_idx, chunk) in usable.iter().enumerate() {
            let mut neg_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                opts.seed,
                &format!("srl-neg-{epoch}-{chunk_idx}"),
            ));
            let (z, enc_cache) = model.forward_encoder(chunk, &params)?;
            let (c, ctx_cache) = model.forward_context(&z, &params)?;
            let mut grads = ParameterStore::new();
            let loss = match model.contrastive_loss_grads(&z, &c, &params, &mut grads, &mut neg_rng)
            {
                Ok((loss, dz_direct, dc)) => {
                    let dz_from_context =
                        model.backward_context(&ctx_cache, &dc, &params, &mut grads)?;
                    let dz_total = dz_direct + dz_from_context;
                    model.backward_encoder(&enc_cache, &dz_total, &params, &mut grads)?;
                    loss
                }
                Err(Error::NonFinite { context }) => {
                    return Err(Error::Divergence(format!(
                        "{context} at epoch {epoch}, iteration {iteration}; last checkpoint retained"
                    )));
                }
                Err(e) => return Err(e),
            };
            let lr = schedule.lr_at(iteration, (epoch - 1) as u64);
            adam_step(&mut params, &grads, &mut state, lr)?;
            log::debug!("srl epoch {epoch} iter {iteration} loss {loss:.6} lr {lr:.3e}");
            report.iteration_losses.push(loss);
            epoch_loss += loss;
            iteration += 1;
        }
        report.epoch_losses.push(epoch_loss / usable.len() as f64);
        save(&params, epoch)?;
    }
    Ok((model, params, report))
}

/// Rebuild a model and its parameters from a checkpoint written by
/// [`train_srl`].
pub fn load_srl_checkpoint(path: impl AsRef<Path>) -> Result<(SrlModel, ParameterStore)> {
    let (params, meta) = crate::nn::load_checkpoint(&path)?;
    let config: SrlConfig = meta
        .get("config")
        .ok_or_else(|| Error::Integrity("checkpoint lacks a config entry".into()))
        .and_then(|s| serde_json::from_str(s).map_err(Error::from))?;
    let model = SrlModel::new(config, "srl.")?;
    Ok((model, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_wave(samples: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform {
            samples: (0..samples).map(|_| rng.random_range(-0.5..0.5)).collect(),
            sample_rate: 16_000,
        }
    }

    fn small_model(seed: u64) -> (SrlModel, ParameterStore) {
        let model = SrlModel::new(SrlConfig::small(), "srl.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.init(&mut params, &mut rng).unwrap();
        (model, params)
    }

    #[test]
    fn default_encoder_maps_16000_samples_to_98_rows() {
        let (model, params) = small_model(1);
        assert_eq!(model.latent_len(16_000), Some(98));
        let z = model.encode_frames(&noise_wave(16_000, 2), &params).unwrap();
        assert_eq!(z.frames.dim(), (98, 16));
    }

    #[test]
    fn forward_is_deterministic() {
        let (model, params) = small_model(3);
        let wave = noise_wave(4_000, 4);
        let a = model.encode_frames(&wave, &params).unwrap();
        let b = model.encode_frames(&wave, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wave_shorter_than_first_kernel_is_rejected() {
        let (model, params) = small_model(5);
        let wave = Waveform {
            samples: vec![0.0; 9],
            sample_rate: 16_000,
        };
        let err = model.encode_frames(&wave, &params).unwrap_err();
        assert!(matches!(err, Error::TooShort { .. }));
        assert_eq!(model.min_input_samples(), 465);
    }

    #[test]
    fn context_is_causal_exactly() {
        let (model, params) = small_model(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = 12;
        let z = LatentSequence {
            frames: Array2::from_shape_fn((t, 16), |_| rng.random_range(-1.0..1.0)),
        };
        let base = model.contextualize(&z, &params).unwrap();
        for t_perturbed in [3, 7, 11] {
            let mut z2 = z.clone();
            z2.frames[[t_perturbed, 5]] += 10.0;
            let out = model.contextualize(&z2, &params).unwrap();
            for s in 0..t_perturbed {
                for d in 0..16 {
                    assert_eq!(
                        base.frames[[s, d]],
                        out.frames[[s, d]],
                        "row {s} changed after perturbing row {t_perturbed}"
                    );
                }
            }
            // And the perturbed row itself does change.
            assert_ne!(base.frames.row(t_perturbed), out.frames.row(t_perturbed));
        }
    }

    #[test]
    fn single_row_context_works() {
        let (model, params) = small_model(8);
        let z = LatentSequence {
            frames: Array2::from_elem((1, 16), 0.3),
        };
        let c = model.contextualize(&z, &params).unwrap();
        assert_eq!(c.frames.nrows(), 1);
    }

    #[test]
    fn context_prefix_property() {
        let (model, params) = small_model(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = LatentSequence {
            frames: Array2::from_shape_fn((10, 16), |_| rng.random_range(-1.0..1.0)),
        };
        let full = model.contextualize(&z, &params).unwrap();
        for m in 1..=10 {
            let prefix = LatentSequence {
                frames: z.frames.slice(ndarray::s![..m, ..]).to_owned(),
            };
            let c = model.contextualize(&prefix, &params).unwrap();
            assert_eq!(c.frames, full.frames.slice(ndarray::s![..m, ..]).to_owned());
        }
    }

    #[test]
    fn zero_discriminators_give_the_closed_form_loss() {
        // With h_s == 0 every sigmoid is 1/2, so the loss is exactly
        // sum_s (T - s) * (1 + lambda) * ln 2.
        let mut config = SrlConfig::small();
        config.prediction_steps = 1;
        config.negatives = 1;
        let model = SrlModel::new(config, "srl.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        model.init(&mut params, &mut rng).unwrap();
        for name in ["srl.disc0.w", "srl.disc0.b"] {
            params.get_mut(name).unwrap().fill(0.0);
        }
        let z = LatentSequence {
            frames: Array2::from_shape_fn((3, 16), |_| rng.random_range(-1.0..1.0)),
        };
        let c = ContextSequence {
            frames: Array2::from_shape_fn((3, 16), |_| rng.random_range(-1.0..1.0)),
        };
        let loss = model
            .contrastive_loss(&z, &c, &params, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let expected = 2.0 * 2.0 * 2f64.ln();
        assert!((loss - expected).abs() < 1e-12, "loss {loss} vs {expected}");
    }

    #[test]
    fn perfect_discrimination_drives_the_loss_to_zero() {
        // Positive logits -> +inf and negative logits -> -inf: both
        // log-sigmoid terms vanish.
        let mut config = SrlConfig::small();
        config.channels = 1;
        config.encoder_kernels = vec![2];
        config.encoder_strides = vec![1];
        config.context_layers = 1;
        config.prediction_steps = 1;
        config.negatives = 1;
        let model = SrlModel::new(config, "srl.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        model.init(&mut params, &mut rng).unwrap();

        // T = 2: position i=0 predicts pos=1; the only negative is index 0.
        // With z = [-1, +1] and h(c_0) hugely positive, the positive logit
        // is a large positive and the negative logit a large negative.
        let z = LatentSequence {
            frames: Array2::from_shape_vec((2, 1), vec![-1.0, 1.0]).unwrap(),
        };
        let c = ContextSequence {
            frames: Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap(),
        };
        params.get_mut("srl.disc0.w").unwrap().fill(1e4);
        params.get_mut("srl.disc0.b").unwrap().fill(0.0);
        let loss = model
            .contrastive_loss(&z, &c, &params, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn scalar_hand_oracle_matches() {
        // D=1, T=3, k=1, lambda=1 with hand-specified z, c, h. The oracle
        // below evaluates the loss directly from the scalar formula,
        // replicating the documented negative-draw procedure (uniform over
        // 0..T-1 skipping the positive).
        let mut config = SrlConfig::small();
        config.channels = 1;
        config.encoder_kernels = vec![2];
        config.encoder_strides = vec![1];
        config.context_layers = 1;
        config.prediction_steps = 1;
        config.negatives = 1;
        let model = SrlModel::new(config, "srl.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        model.init(&mut params, &mut rng).unwrap();

        let (w, b) = (0.7, -0.2);
        params.get_mut("srl.disc0.w").unwrap().fill(w);
        params.get_mut("srl.disc0.b").unwrap().fill(b);
        let zv = [0.5, -1.2, 2.0];
        let cv = [0.3, 0.9, -0.4];
        let z = LatentSequence {
            frames: Array2::from_shape_vec((3, 1), zv.to_vec()).unwrap(),
        };
        let c = ContextSequence {
            frames: Array2::from_shape_vec((3, 1), cv.to_vec()).unwrap(),
        };

        let seed = 42;
        let loss = model
            .contrastive_loss(&z, &c, &params, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap();

        // Independent scalar evaluation.
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut expected = 0.0;
        for i in 0..2usize {
            let pos = i + 1;
            let h = w * cv[i] + b;
            expected -= sigma(zv[pos] * h).ln();
            let mut idx = oracle_rng.random_range(0..2usize);
            if idx >= pos {
                idx += 1;
            }
            expected -= sigma(-zv[idx] * h).ln();
        }
        assert!((loss - expected).abs() < 1e-9, "loss {loss} vs {expected}");
    }

    #[test]
    fn k_not_less_than_t_is_rejected() {
        let (model, params) = small_model(14);
        let z = LatentSequence {
            frames: Array2::zeros((3, 16)),
        };
        let c = ContextSequence {
            frames: Array2::zeros((3, 16)),
        };
        let err = model
            .contrastive_loss(&z, &c, &params, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences() {
        let mut config = SrlConfig::small();
        config.channels = 4;
        config.encoder_kernels = vec![4, 3];
        config.encoder_strides = vec![2, 2];
        config.context_layers = 2;
        config.prediction_steps = 2;
        config.negatives = 2;
        let model = SrlModel::new(config, "srl.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        model.init(&mut params, &mut rng).unwrap();
        assert!(params.scalar_count() <= 10_000);
        let wave = noise_wave(60, 16);

        let report = crate::nn::grad_check(
            &|p: &ParameterStore| {
                let mut neg_rng = ChaCha8Rng::seed_from_u64(77);
                let (z, enc_cache) = model.forward_encoder(&wave, p)?;
                let (c, ctx_cache) = model.forward_context(&z, p)?;
                let mut g = ParameterStore::new();
                let (loss, dz_direct, dc) =
                    model.contrastive_loss_grads(&z, &c, p, &mut g, &mut neg_rng)?;
                let dz_ctx = model.backward_context(&ctx_cache, &dc, p, &mut g)?;
                model.backward_encoder(&enc_cache, &(dz_direct + dz_ctx), p, &mut g)?;
                Ok((loss, g))
            },
            &mut params,
            50,
            1e-5,
            3,
        )
        .unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "max rel err {} at {}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn training_reduces_the_loss_and_is_deterministic() {
        let mut config = SrlConfig::small();
        config.chunk_seconds = 0.05; // 800-sample chunks
        config.prediction_steps = 2;
        config.negatives = 2;
        let waves: Vec<Waveform> = (0..4).map(|i| noise_wave(2_000, 100 + i)).collect();
        let opts = SrlTrainOptions {
            epochs: 4,
            seed: 9,
            ..Default::default()
        };
        let (_, params_a, report_a) = train_srl(&waves, &config, &opts).unwrap();
        let (_, params_b, report_b) = train_srl(&waves, &config, &opts).unwrap();
        assert_eq!(report_a.iteration_losses, report_b.iteration_losses);
        assert!(
            report_a.epoch_losses.last().unwrap() < report_a.epoch_losses.first().unwrap(),
            "losses: {:?}",
            report_a.epoch_losses
        );
        // Same seed, same final weights.
        for (name, arr) in params_a.iter() {
            assert_eq!(arr, params_b.get(name).unwrap());
        }
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let mut config = SrlConfig::small();
        config.chunk_seconds = 0.1;
        let waves = vec![noise_wave(3_200, 50)];
        let opts = SrlTrainOptions {
            epochs: 0,
            seed: 21,
            ..Default::default()
        };
        let (model, params, report) = train_srl(&waves, &config, &opts).unwrap();
        assert!(report.iteration_losses.is_empty());

        let mut fresh = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(21, "srl-init"));
        model.init(&mut fresh, &mut rng).unwrap();
        for (name, arr) in fresh.iter() {
            assert_eq!(arr, params.get(name).unwrap());
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_the_forward_pass() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = SrlConfig::small();
        config.chunk_seconds = 0.1;
        let waves = vec![noise_wave(3_200, 60)];
        let opts = SrlTrainOptions {
            epochs: 1,
            seed: 3,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let (model, params, _) = train_srl(&waves, &config, &opts).unwrap();
        let (loaded_model, loaded_params) =
            load_srl_checkpoint(dir.path().join("srl.ckpt")).unwrap();
        assert_eq!(loaded_model.config, model.config);

        let wave = noise_wave(1_600, 61);
        let a = model.features(&wave, &params).unwrap();
        let b = loaded_model.features(&wave, &loaded_params).unwrap();
        assert_eq!(a.frames, b.frames);
    }
}
