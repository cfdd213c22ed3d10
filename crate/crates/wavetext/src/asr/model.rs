//! The recognizer backbone (parallel multi-kernel conv branches, one
//! stride-2 stage, an LSTM stack) and the time-distributed prediction layer.

use ndarray::{concatenate, s, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asr::LogProbMatrix;
use crate::error::{Error, Result};
use crate::nn::{
    log_softmax, log_softmax_backward, relu, relu_backward, Affine, Conv1d, LayerNorm,
    LayerNormCache, Lstm, LstmCache, ParameterStore,
};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BackboneConfig {
    /// Feature dimension D of the input rows.
    pub input_dim: usize,
    /// One parallel conv branch per kernel size, stride 1, length-preserving.
    pub branch_kernels: Vec<usize>,
    pub branch_channels: usize,
    /// Channels of the single stride-2 stage that halves T.
    pub stride_channels: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub bidirectional: bool,
}

impl BackboneConfig {
    pub fn default_for(input_dim: usize) -> Self {
        Self {
            input_dim,
            branch_kernels: vec![3, 5, 7],
            branch_channels: 128,
            stride_channels: 256,
            lstm_layers: 2,
            lstm_hidden: 256,
            bidirectional: true,
        }
    }

    /// Narrow variant for CPU tests.
    pub fn small(input_dim: usize) -> Self {
        Self {
            branch_channels: 12,
            stride_channels: 24,
            lstm_layers: 1,
            lstm_hidden: 32,
            ..Self::default_for(input_dim)
        }
    }

    /// Width of the hidden rows the backbone emits.
    pub fn hidden_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.lstm_hidden
        } else {
            self.lstm_hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.branch_kernels.is_empty() || self.branch_kernels.iter().any(|&k| k % 2 == 0) {
            return Err(Error::Config(
                "branch kernels must be a non-empty list of odd sizes".into(),
            ));
        }
        if self.input_dim == 0
            || self.branch_channels == 0
            || self.stride_channels == 0
            || self.lstm_layers == 0
            || self.lstm_hidden == 0
        {
            return Err(Error::Config("backbone dimensions must be positive".into()));
        }
        Ok(())
    }
}

pub struct BackboneModel {
    pub config: BackboneConfig,
    branches: Vec<Conv1d>,
    concat_norm: LayerNorm,
    stride_conv: Conv1d,
    stride_norm: LayerNorm,
    lstms: Vec<Lstm>,
}

pub struct BackboneCache {
    input: Array2<f64>,
    concat: Array2<f64>,
    concat_norm: LayerNormCache,
    stride_in: Array2<f64>,
    stride_pre: Array2<f64>,
    stride_norm: LayerNormCache,
    lstm_caches: Vec<LstmCache>,
}

impl BackboneModel {
    pub fn new(config: BackboneConfig, prefix: &str) -> Result<Self> {
        config.validate()?;
        let branches = config
            .branch_kernels
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                Conv1d::new(
                    format!("{prefix}branch{i}"),
                    config.input_dim,
                    config.branch_channels,
                    k,
                    1,
                    (k - 1) / 2,
                )
            })
            .collect();
        let concat_width = config.branch_channels * config.branch_kernels.len();
        let concat_norm = LayerNorm::new(format!("{prefix}mcnn.ln"), concat_width);
        // Kernel 4 / stride 2 / pad 1 maps even T to exactly T/2.
        let stride_conv = Conv1d::new(
            format!("{prefix}stride"),
            concat_width,
            config.stride_channels,
            4,
            2,
            1,
        );
        let stride_norm = LayerNorm::new(format!("{prefix}stride.ln"), config.stride_channels);
        let mut lstms = Vec::new();
        for i in 0..config.lstm_layers {
            let in_dim = if i == 0 { config.stride_channels } else { config.hidden_dim() };
            lstms.push(Lstm::new(
                format!("{prefix}lstm{i}"),
                in_dim,
                config.lstm_hidden,
                config.bidirectional,
            ));
        }
        Ok(Self {
            config,
            branches,
            concat_norm,
            stride_conv,
            stride_norm,
            lstms,
        })
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        for b in &self.branches {
            b.init(store, rng)?;
        }
        self.concat_norm.init(store)?;
        self.stride_conv.init(store, rng)?;
        self.stride_norm.init(store)?;
        for l in &self.lstms {
            l.init(store, rng)?;
        }
        Ok(())
    }

    /// Features to hidden rows: `T x D` in (T even), `T/2 x H` out.
    pub fn forward(
        &self,
        features: &Array2<f64>,
        p: &ParameterStore,
    ) -> Result<(Array2<f64>, BackboneCache)> {
        let t_len = features.nrows();
        if t_len == 0 || t_len % 2 != 0 {
            return Err(Error::Config(format!(
                "backbone input must have a positive even frame count; got {t_len} (padding is the caller's job)"
            )));
        }
        if features.ncols() != self.config.input_dim {
            return Err(Error::Config(format!(
                "backbone expects {}-dim features, got {}",
                self.config.input_dim,
                features.ncols()
            )));
        }
        let outs: Vec<Array2<f64>> = self
            .branches
            .iter()
            .map(|b| b.forward(features, p))
            .collect::<Result<_>>()?;
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let concat = concatenate(Axis(1), &views).expect("branch outputs share T");
        let (normed, concat_norm) = self.concat_norm.forward(&relu(&concat), p)?;

        let stride_pre = self.stride_conv.forward(&normed, p)?;
        let (hidden_in, stride_norm) = self.stride_norm.forward(&relu(&stride_pre), p)?;

        let mut h = hidden_in;
        let mut lstm_caches = Vec::with_capacity(self.lstms.len());
        for l in &self.lstms {
            let (out, cache) = l.forward(&h, p)?;
            lstm_caches.push(cache);
            h = out;
        }
        Ok((
            h,
            BackboneCache {
                input: features.clone(),
                concat,
                concat_norm,
                stride_in: normed,
                stride_pre,
                stride_norm,
                lstm_caches,
            },
        ))
    }

    /// Gradient with respect to the input features.
    pub fn backward(
        &self,
        cache: &BackboneCache,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let mut d = dout.clone();
        for (l, c) in self.lstms.iter().zip(&cache.lstm_caches).rev() {
            d = l.backward(c, &d, p, g)?;
        }
        let d = self.stride_norm.backward(&cache.stride_norm, &d, p, g)?;
        let d = relu_backward(&cache.stride_pre, &d);
        let d = self.stride_conv.backward(&cache.stride_in, &d, p, g)?;
        let d = self.concat_norm.backward(&cache.concat_norm, &d, p, g)?;
        let d = relu_backward(&cache.concat, &d);

        let mut dx = Array2::zeros(cache.input.raw_dim());
        let c = self.config.branch_channels;
        for (i, b) in self.branches.iter().enumerate() {
            let slice = d.slice(s![.., i * c..(i + 1) * c]).to_owned();
            dx += &b.backward(&cache.input, &slice, p, g)?;
        }
        Ok(dx)
    }
}

/// Affine map shared across frames followed by a per-row log-softmax.
pub struct PredictionLayer {
    pub affine: Affine,
}

pub struct PredictionCache {
    hidden: Array2<f64>,
    logprobs: Array2<f64>,
}

impl PredictionLayer {
    pub fn new(hidden_dim: usize, vocab_size: usize, prefix: &str) -> Self {
        Self {
            affine: Affine::new(format!("{prefix}predict"), hidden_dim, vocab_size),
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        self.affine.init(store, rng)
    }

    pub fn forward(
        &self,
        hidden: &Array2<f64>,
        vocab: &Vocabulary,
        p: &ParameterStore,
    ) -> Result<(LogProbMatrix, PredictionCache)> {
        if self.affine.out_dim != vocab.len() {
            return Err(Error::Config(format!(
                "prediction layer width {} does not match vocabulary size {}",
                self.affine.out_dim,
                vocab.len()
            )));
        }
        if hidden.ncols() != self.affine.in_dim {
            return Err(Error::Config(format!(
                "prediction layer expects {}-dim hidden rows, got {}",
                self.affine.in_dim,
                hidden.ncols()
            )));
        }
        let logits = self.affine.forward(hidden, p)?;
        let logprobs = log_softmax(&logits);
        Ok((
            LogProbMatrix::new(logprobs.clone())?,
            PredictionCache {
                hidden: hidden.clone(),
                logprobs,
            },
        ))
    }

    /// Gradient with respect to the hidden rows.
    pub fn backward(
        &self,
        cache: &PredictionCache,
        dlogprobs: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let dlogits = log_softmax_backward(&cache.logprobs, dlogprobs);
        self.affine.backward(&cache.hidden, &dlogits, p, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    fn setup(input_dim: usize, seed: u64) -> (BackboneModel, ParameterStore, ChaCha8Rng) {
        let model = BackboneModel::new(BackboneConfig::small(input_dim), "bb.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.init(&mut params, &mut rng).unwrap();
        (model, params, rng)
    }

    fn random_features(t: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn ten_frames_halve_to_five() {
        let (model, params, mut rng) = setup(8, 1);
        let x = random_features(10, 8, &mut rng);
        let (h, _) = model.forward(&x, &params).unwrap();
        assert_eq!(h.dim(), (5, model.config.hidden_dim()));
    }

    #[test]
    fn odd_frame_count_is_a_contract_violation() {
        let (model, params, mut rng) = setup(8, 2);
        let x = random_features(9, 8, &mut rng);
        assert!(matches!(model.forward(&x, &params).err().unwrap(), Error::Config(_)));
    }

    #[test]
    fn zero_input_is_finite_and_deterministic() {
        let (model, params, _) = setup(6, 3);
        let x = Array2::zeros((8, 6));
        let (a, _) = model.forward(&x, &params).unwrap();
        let (b, _) = model.forward(&x, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn branch_concatenation_width_is_branches_times_channels() {
        let (model, params, mut rng) = setup(8, 4);
        let x = random_features(6, 8, &mut rng);
        let (_, cache) = model.forward(&x, &params).unwrap();
        assert_eq!(cache.concat.ncols(), 3 * model.config.branch_channels);
    }

    #[test]
    fn backbone_gradients_match_finite_differences() {
        use crate::nn::grad_check;
        let mut config = BackboneConfig::small(5);
        config.branch_channels = 4;
        config.stride_channels = 6;
        config.lstm_hidden = 5;
        let model = BackboneModel::new(config, "bb.").unwrap();
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        model.init(&mut params, &mut rng).unwrap();
        assert!(params.scalar_count() <= 10_000);
        let x = random_features(8, 5, &mut rng);
        params.insert("x", x.into_dyn()).unwrap();
        let r = random_features(4, model.config.hidden_dim(), &mut rng);

        let report = grad_check(
            &move |p: &ParameterStore| {
                let x = p
                    .get("x")
                    .unwrap()
                    .view()
                    .into_dimensionality::<ndarray::Ix2>()
                    .unwrap()
                    .to_owned();
                let (h, cache) = model.forward(&x, p)?;
                let loss = (&h * &r).sum();
                let mut g = ParameterStore::new();
                let dx = model.backward(&cache, &r, p, &mut g)?;
                g.insert("x", dx.into_dyn()).unwrap();
                Ok((loss, g))
            },
            &mut params,
            50,
            1e-5,
            6,
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
    fn prediction_rows_are_distributions_and_time_distributed() {
        let vocab = Vocabulary::build(["AB上"]);
        let layer = PredictionLayer::new(6, vocab.len(), "");
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        layer.init(&mut params, &mut rng).unwrap();
        let hidden = random_features(5, 6, &mut rng);
        let (lp, _) = layer.forward(&hidden, &vocab, &params).unwrap();
        for row in lp.rows().outer_iter() {
            let total: f64 = row.iter().map(|&v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }

        // Permuting two hidden rows permutes the same output rows.
        let mut permuted = hidden.clone();
        let (r0, r3) = (hidden.row(0).to_owned(), hidden.row(3).to_owned());
        permuted.row_mut(0).assign(&r3);
        permuted.row_mut(3).assign(&r0);
        let (lp2, _) = layer.forward(&permuted, &vocab, &params).unwrap();
        assert_eq!(lp.rows().row(0), lp2.rows().row(3));
        assert_eq!(lp.rows().row(3), lp2.rows().row(0));
        assert_eq!(lp.rows().row(1), lp2.rows().row(1));
    }

    #[test]
    fn zero_prediction_weights_give_uniform_rows() {
        let vocab = Vocabulary::build(["ABCD"]);
        let layer = PredictionLayer::new(4, vocab.len(), "");
        let mut params = ParameterStore::new();
        layer.affine.init_zeroed(&mut params).unwrap();
        let hidden = Array2::from_elem((3, 4), 0.7);
        let (lp, _) = layer.forward(&hidden, &vocab, &params).unwrap();
        let expected = -(vocab.len() as f64).ln();
        assert!(lp.rows().iter().all(|&v| (v - expected).abs() < 1e-12));
    }

    #[test]
    fn width_mismatch_is_a_configuration_error() {
        let vocab = Vocabulary::build(["AB"]);
        let layer = PredictionLayer::new(6, vocab.len() + 1, "");
        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        layer.init(&mut params, &mut rng).unwrap();
        let hidden = Array2::zeros((2, 6));
        assert!(matches!(
            layer.forward(&hidden, &vocab, &params).err().unwrap(),
            Error::Config(_)
        ));
    }
}
