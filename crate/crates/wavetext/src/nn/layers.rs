//! Layer primitives with explicit forward and backward passes.
//!
//! Sequences are `(T, C)` row-major matrices: one row per time step. Every
//! layer reads its weights from a [`ParameterStore`] under a name prefix and
//! accumulates parameter gradients into a second store, so a whole network's
//! trainable state lives in one place.

use ndarray::{s, Array1, Array2, ArrayD, Axis, IxDyn};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::ParameterStore;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Register a uniformly initialized array under `name`.
pub fn init_uniform(
    store: &mut ParameterStore,
    name: &str,
    shape: &[usize],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    store.insert(name, ArrayD::from_shape_vec(IxDyn(shape), data).unwrap())
}

pub fn init_zeros(store: &mut ParameterStore, name: &str, shape: &[usize]) -> Result<()> {
    store.insert(name, ArrayD::zeros(IxDyn(shape)))
}

// ── 1-D convolution ──────────────────────────────────────────────────────

/// 1-D convolution over the time axis with independent left/right padding.
/// A causal variant pads only on the left so output row t never sees input
/// rows beyond t.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl Conv1d {
    pub fn new(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad_left: padding,
            pad_right: padding,
        }
    }

    /// Stride-1 convolution padded on the left only; output length equals
    /// input length and row t depends on rows `t-kernel+1..=t` alone.
    pub fn causal(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            pad_left: kernel - 1,
            pad_right: 0,
        }
    }

    fn w_name(&self) -> String {
        format!("{}.w", self.name)
    }

    fn b_name(&self) -> String {
        format!("{}.b", self.name)
    }

    /// Output length for an input of `t` rows, or `None` when the input is
    /// shorter than one kernel window.
    pub fn out_len(&self, t: usize) -> Option<usize> {
        let padded = t + self.pad_left + self.pad_right;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let scale = 1.0 / ((self.in_ch * self.kernel) as f64).sqrt();
        init_uniform(
            store,
            &self.w_name(),
            &[self.out_ch, self.in_ch, self.kernel],
            scale,
            rng,
        )?;
        init_zeros(store, &self.b_name(), &[self.out_ch])
    }

    fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let t_out = self.out_len(x.nrows()).expect("input shorter than kernel");
        let mut cols = Array2::zeros((t_out, self.in_ch * self.kernel));
        for tp in 0..t_out {
            let start = (tp * self.stride) as isize - self.pad_left as isize;
            for k in 0..self.kernel {
                let pos = start + k as isize;
                if pos >= 0 && (pos as usize) < x.nrows() {
                    let pos = pos as usize;
                    for c in 0..self.in_ch {
                        cols[[tp, c * self.kernel + k]] = x[[pos, c]];
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array2<f64>, p: &ParameterStore) -> Result<Array2<f64>> {
        assert_eq!(x.ncols(), self.in_ch, "conv {}: channel mismatch", self.name);
        let w = p.view3(&self.w_name())?;
        let b = p.view1(&self.b_name())?;
        let w2 = w
            .to_shape((self.out_ch, self.in_ch * self.kernel))
            .unwrap();
        let cols = self.im2col(x);
        let mut y = cols.dot(&w2.t());
        y += &b;
        Ok(y)
    }

    /// Returns the gradient with respect to the input; parameter gradients
    /// are accumulated into `g`.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let w = p.view3(&self.w_name())?;
        let w2 = w
            .to_shape((self.out_ch, self.in_ch * self.kernel))
            .unwrap();
        let cols = self.im2col(x);

        let dw2 = dout.t().dot(&cols);
        g.add_to(
            &self.w_name(),
            &dw2.into_shape_with_order(IxDyn(&[self.out_ch, self.in_ch, self.kernel]))
                .unwrap(),
        )?;
        g.add_to(&self.b_name(), &dout.sum_axis(Axis(0)).into_dyn())?;

        let dcols = dout.dot(&w2.view());
        let mut dx = Array2::zeros(x.raw_dim());
        for tp in 0..dout.nrows() {
            let start = (tp * self.stride) as isize - self.pad_left as isize;
            for k in 0..self.kernel {
                let pos = start + k as isize;
                if pos >= 0 && (pos as usize) < x.nrows() {
                    let pos = pos as usize;
                    for c in 0..self.in_ch {
                        dx[[pos, c]] += dcols[[tp, c * self.kernel + k]];
                    }
                }
            }
        }
        Ok(dx)
    }
}

// ── Transposed 1-D convolution ───────────────────────────────────────────

/// Transposed convolution used to undo temporal downsampling:
/// `out_len = (T - 1) * stride + kernel`.
#[derive(Debug, Clone)]
pub struct TransposedConv1d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl TransposedConv1d {
    pub fn new(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            stride,
        }
    }

    fn w_name(&self) -> String {
        format!("{}.w", self.name)
    }

    fn b_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn out_len(&self, t: usize) -> usize {
        (t - 1) * self.stride + self.kernel
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let scale = 1.0 / ((self.in_ch * self.kernel) as f64).sqrt();
        init_uniform(
            store,
            &self.w_name(),
            &[self.out_ch, self.in_ch, self.kernel],
            scale,
            rng,
        )?;
        init_zeros(store, &self.b_name(), &[self.out_ch])
    }

    pub fn forward(&self, x: &Array2<f64>, p: &ParameterStore) -> Result<Array2<f64>> {
        assert_eq!(x.ncols(), self.in_ch);
        let t_in = x.nrows();
        let w = p.view3(&self.w_name())?;
        let b = p.view1(&self.b_name())?;
        let mut y = Array2::zeros((self.out_len(t_in), self.out_ch));
        for k in 0..self.kernel {
            let wk = w.slice(s![.., .., k]);
            let contrib = x.dot(&wk.t());
            let end = k + (t_in - 1) * self.stride + 1;
            let mut rows = y.slice_mut(s![k..end; self.stride, ..]);
            rows += &contrib;
        }
        y += &b;
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &Array2<f64>,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let t_in = x.nrows();
        let w = p.view3(&self.w_name())?;
        let mut dw = ndarray::Array3::<f64>::zeros((self.out_ch, self.in_ch, self.kernel));
        let mut dx = Array2::zeros(x.raw_dim());
        for k in 0..self.kernel {
            let end = k + (t_in - 1) * self.stride + 1;
            let dout_k = dout.slice(s![k..end; self.stride, ..]);
            let wk = w.slice(s![.., .., k]);
            dw.slice_mut(s![.., .., k]).assign(&dout_k.t().dot(x));
            dx += &dout_k.dot(&wk);
        }
        g.add_to(&self.w_name(), &dw.into_dyn())?;
        g.add_to(&self.b_name(), &dout.sum_axis(Axis(0)).into_dyn())?;
        Ok(dx)
    }
}

// ── Affine (fully connected) ─────────────────────────────────────────────

/// `y = x W^T + b`, applied row-wise; used both as a plain dense layer and
/// time-distributed over sequences.
#[derive(Debug, Clone)]
pub struct Affine {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Self {
            name: name.into(),
            in_dim,
            out_dim,
        }
    }

    fn w_name(&self) -> String {
        format!("{}.w", self.name)
    }

    fn b_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let scale = 1.0 / (self.in_dim as f64).sqrt();
        init_uniform(store, &self.w_name(), &[self.out_dim, self.in_dim], scale, rng)?;
        init_zeros(store, &self.b_name(), &[self.out_dim])
    }

    /// Zero-initialized variant (weights and bias all zero).
    pub fn init_zeroed(&self, store: &mut ParameterStore) -> Result<()> {
        init_zeros(store, &self.w_name(), &[self.out_dim, self.in_dim])?;
        init_zeros(store, &self.b_name(), &[self.out_dim])
    }

    pub fn forward(&self, x: &Array2<f64>, p: &ParameterStore) -> Result<Array2<f64>> {
        assert_eq!(x.ncols(), self.in_dim, "affine {}: width mismatch", self.name);
        let w = p.view2(&self.w_name())?;
        let b = p.view1(&self.b_name())?;
        let mut y = x.dot(&w.t());
        y += &b;
        Ok(y)
    }

    pub fn backward(
        &self,
        x: &Array2<f64>,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let w = p.view2(&self.w_name())?;
        g.add_to(&self.w_name(), &dout.t().dot(x).into_dyn())?;
        g.add_to(&self.b_name(), &dout.sum_axis(Axis(0)).into_dyn())?;
        Ok(dout.dot(&w))
    }
}

// ── Layer normalization ──────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
    pub eps: f64,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
            eps: 1e-5,
        }
    }

    fn g_name(&self) -> String {
        format!("{}.g", self.name)
    }

    fn b_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, store: &mut ParameterStore) -> Result<()> {
        store.insert(self.g_name(), ArrayD::ones(IxDyn(&[self.dim])))?;
        init_zeros(store, &self.b_name(), &[self.dim])
    }

    /// Normalizes each row to zero mean / unit variance, then applies the
    /// learned per-feature scale and shift.
    pub fn forward(
        &self,
        x: &Array2<f64>,
        p: &ParameterStore,
    ) -> Result<(Array2<f64>, LayerNormCache)> {
        assert_eq!(x.ncols(), self.dim);
        let gamma = p.view1(&self.g_name())?;
        let beta = p.view1(&self.b_name())?;
        let d = self.dim as f64;
        let mut xhat = Array2::zeros(x.raw_dim());
        let mut inv_std = Array1::zeros(x.nrows());
        for (t, row) in x.outer_iter().enumerate() {
            let mu = row.sum() / d;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[t] = is;
            for (j, &v) in row.iter().enumerate() {
                xhat[[t, j]] = (v - mu) * is;
            }
        }
        let mut y = &xhat * &gamma;
        y += &beta;
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let gamma = p.view1(&self.g_name())?;
        let d = self.dim as f64;
        g.add_to(&self.g_name(), &(dout * &cache.xhat).sum_axis(Axis(0)).into_dyn())?;
        g.add_to(&self.b_name(), &dout.sum_axis(Axis(0)).into_dyn())?;

        let mut dx = Array2::zeros(dout.raw_dim());
        for t in 0..dout.nrows() {
            let dy = dout.row(t);
            let xhat = cache.xhat.row(t);
            let dxhat: Vec<f64> = dy.iter().zip(gamma.iter()).map(|(&a, &b)| a * b).collect();
            let mean_dxhat = dxhat.iter().sum::<f64>() / d;
            let mean_dxhat_xhat = dxhat
                .iter()
                .zip(xhat.iter())
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
                / d;
            let is = cache.inv_std[t];
            for j in 0..self.dim {
                dx[[t, j]] = is * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
            }
        }
        Ok(dx)
    }
}

// ── Element-wise and row-wise primitives ─────────────────────────────────

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(x: &Array2<f64>, dout: &Array2<f64>) -> Array2<f64> {
    let mut dx = dout.clone();
    ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Log-softmax over the last axis of a `(T, C)` matrix.
pub fn log_softmax(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    y
}

/// Backward through log-softmax given its output `y = log_softmax(x)`.
pub fn log_softmax_backward(y: &Array2<f64>, dout: &Array2<f64>) -> Array2<f64> {
    let mut dx = dout.clone();
    for t in 0..y.nrows() {
        let s: f64 = dout.row(t).sum();
        for j in 0..y.ncols() {
            dx[[t, j]] -= y[[t, j]].exp() * s;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradCheckTolerance};
    use ndarray::IxDyn;
    use rand::SeedableRng;

    /// Finite-difference check of a layer: both the input (stored under
    /// "x") and the weights are probed, with the scalar loss
    /// `sum(forward(x) * r)` for a fixed random `r`.
    fn check_layer<F>(params: &mut ParameterStore, forward: F)
    where
        F: Fn(&ParameterStore) -> Result<(f64, ParameterStore)>,
    {
        let report = grad_check(&forward, params, 40, 1e-5, 7).unwrap();
        assert!(
            report.max_rel_err < GradCheckTolerance::DEFAULT,
            "max relative error {} at {}",
            report.max_rel_err,
            report.worst
        );
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn conv_length_recurrence() {
        let c = Conv1d::new("c", 1, 4, 10, 5, 0);
        assert_eq!(c.out_len(16000), Some(3199));
        assert_eq!(c.out_len(10), Some(1));
        assert_eq!(c.out_len(9), None);
        let causal = Conv1d::causal("cc", 4, 4, 3);
        assert_eq!(causal.out_len(17), Some(17));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Conv1d::new("conv", 3, 2, 4, 2, 1);
        let mut params = ParameterStore::new();
        layer.init(&mut params, &mut rng).unwrap();
        let x = random_matrix(11, 3, &mut rng);
        params.insert("x", x.into_dyn()).unwrap();
        let t_out = layer.out_len(11).unwrap();
        let r = random_matrix(t_out, 2, &mut rng);

        check_layer(&mut params, move |p| {
            let x = p.get("x").unwrap().view().into_dimensionality().unwrap().to_owned();
            let y = layer.forward(&x, p)?;
            let loss = (&y * &r).sum();
            let mut g = ParameterStore::new();
            let dx = layer.backward(&x, &r, p, &mut g)?;
            g.insert("x", dx.into_dyn()).unwrap();
            Ok((loss, g))
        });
    }

    #[test]
    fn causal_conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = Conv1d::causal("cc", 2, 3, 3);
        let mut params = ParameterStore::new();
        layer.init(&mut params, &mut rng).unwrap();
        let x = random_matrix(7, 2, &mut rng);
        params.insert("x", x.into_dyn()).unwrap();
        let r = random_matrix(7, 3, &mut rng);

        check_layer(&mut params, move |p| {
            let x = p.get("x").unwrap().view().into_dimensionality().unwrap().to_owned();
            let y = layer.forward(&x, p)?;
            let loss = (&y * &r).sum();
            let mut g = ParameterStore::new();
            let dx = layer.backward(&x, &r, p, &mut g)?;
            g.insert("x", dx.into_dyn()).unwrap();
            Ok((loss, g))
        });
    }

    #[test]
    fn transposed_conv_roundtrips_length_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = TransposedConv1d::new("tc", 3, 2, 2, 2);
        assert_eq!(layer.out_len(5), 10);
        let mut params = ParameterStore::new();
        layer.init(&mut params, &mut rng).unwrap();
        let x = random_matrix(5, 3, &mut rng);
        params.insert("x", x.into_dyn()).unwrap();
        let r = random_matrix(10, 2, &mut rng);

        check_layer(&mut params, move |p| {
            let x = p.get("x").unwrap().view().into_dimensionality().unwrap().to_owned();
            let y = layer.forward(&x, p)?;
            let loss = (&y * &r).sum();
            let mut g = ParameterStore::new();
            let dx = layer.backward(&x, &r, p, &mut g)?;
            g.insert("x", dx.into_dyn()).unwrap();
            Ok((loss, g))
        });
    }

    #[test]
    fn affine_layernorm_relu_logsoftmax_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let affine = Affine::new("a", 4, 5);
        let ln = LayerNorm::new("ln", 5);
        let mut params = ParameterStore::new();
        affine.init(&mut params, &mut rng).unwrap();
        ln.init(&mut params).unwrap();
        let x = random_matrix(6, 4, &mut rng);
        params.insert("x", x.into_dyn()).unwrap();
        let r = random_matrix(6, 5, &mut rng);

        check_layer(&mut params, move |p| {
            let x = p.get("x").unwrap().view().into_dimensionality().unwrap().to_owned();
            let a = affine.forward(&x, p)?;
            let h = relu(&a);
            let (n, ln_cache) = ln.forward(&h, p)?;
            let y = log_softmax(&n);
            let loss = (&y * &r).sum();

            let mut g = ParameterStore::new();
            let dn = log_softmax_backward(&y, &r);
            let dh = ln.backward(&ln_cache, &dn, p, &mut g)?;
            let da = relu_backward(&a, &dh);
            let dx = affine.backward(&x, &da, p, &mut g)?;
            g.insert("x", dx.into_dyn()).unwrap();
            Ok((loss, g))
        });
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let x = Array2::from_shape_vec((2, 3), vec![0.1, 2.0, -1.0, 5.0, 5.0, 5.0]).unwrap();
        let y = log_softmax(&x);
        for row in y.outer_iter() {
            let total: f64 = row.iter().map(|&v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroed_affine_emits_zeros() {
        let affine = Affine::new("z", 3, 2);
        let mut params = ParameterStore::new();
        affine.init_zeroed(&mut params).unwrap();
        let x = Array2::from_elem((4, 3), 1.7);
        let y = affine.forward(&x, &params).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert_eq!(params.get("z.w").unwrap().shape(), &[2, 3]);
        let _ = ArrayD::<f64>::zeros(IxDyn(&[1]));
    }
}
