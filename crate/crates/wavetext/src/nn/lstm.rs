//! LSTM layer with backpropagation through time, optionally bidirectional.

use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::layers::{init_uniform, init_zeros, sigmoid};
use crate::nn::ParameterStore;

/// Single LSTM layer. Gate pre-activations are stored as one `(4H, ·)`
/// block in gate order `[input, forget, cell, output]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub name: String,
    pub in_dim: usize,
    pub hidden: usize,
    pub bidirectional: bool,
}

/// Per-direction activations retained for the backward pass.
pub struct LstmDirCache {
    x: Array2<f64>,
    gate_i: Array2<f64>,
    gate_f: Array2<f64>,
    gate_g: Array2<f64>,
    gate_o: Array2<f64>,
    cell: Array2<f64>,
    tanh_cell: Array2<f64>,
    hidden: Array2<f64>,
}

pub struct LstmCache {
    fwd: LstmDirCache,
    bwd: Option<LstmDirCache>,
}

impl Lstm {
    pub fn new(name: impl Into<String>, in_dim: usize, hidden: usize, bidirectional: bool) -> Self {
        Self {
            name: name.into(),
            in_dim,
            hidden,
            bidirectional,
        }
    }

    /// Width of the output rows: `hidden`, doubled when bidirectional.
    pub fn out_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    fn dir_names(&self) -> Vec<String> {
        if self.bidirectional {
            vec![format!("{}.fwd", self.name), format!("{}.bwd", self.name)]
        } else {
            vec![format!("{}.fwd", self.name)]
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let scale = 1.0 / (self.hidden as f64).sqrt();
        for dir in self.dir_names() {
            init_uniform(store, &format!("{dir}.wx"), &[4 * self.hidden, self.in_dim], scale, rng)?;
            init_uniform(store, &format!("{dir}.wh"), &[4 * self.hidden, self.hidden], scale, rng)?;
            init_zeros(store, &format!("{dir}.b"), &[4 * self.hidden])?;
            // Forget-gate bias of 1 keeps early cell state from vanishing.
            let b = store.get_mut(&format!("{dir}.b")).unwrap();
            for j in self.hidden..2 * self.hidden {
                b[j] = 1.0;
            }
        }
        Ok(())
    }

    fn run_dir(&self, dir: &str, x: &Array2<f64>, p: &ParameterStore) -> Result<LstmDirCache> {
        let wx = p.view2(&format!("{dir}.wx"))?;
        let wh = p.view2(&format!("{dir}.wh"))?;
        let b = p.view1(&format!("{dir}.b"))?;
        let t_len = x.nrows();
        let h = self.hidden;

        let mut cache = LstmDirCache {
            x: x.clone(),
            gate_i: Array2::zeros((t_len, h)),
            gate_f: Array2::zeros((t_len, h)),
            gate_g: Array2::zeros((t_len, h)),
            gate_o: Array2::zeros((t_len, h)),
            cell: Array2::zeros((t_len, h)),
            tanh_cell: Array2::zeros((t_len, h)),
            hidden: Array2::zeros((t_len, h)),
        };

        let mut h_prev: Array1<f64> = Array1::zeros(h);
        let mut c_prev: Array1<f64> = Array1::zeros(h);
        for t in 0..t_len {
            let mut a = wx.dot(&x.row(t)) + wh.dot(&h_prev);
            a += &b;
            for j in 0..h {
                let gi = sigmoid(a[j]);
                let gf = sigmoid(a[h + j]);
                let gg = a[2 * h + j].tanh();
                let go = sigmoid(a[3 * h + j]);
                let c = gf * c_prev[j] + gi * gg;
                let tc = c.tanh();
                cache.gate_i[[t, j]] = gi;
                cache.gate_f[[t, j]] = gf;
                cache.gate_g[[t, j]] = gg;
                cache.gate_o[[t, j]] = go;
                cache.cell[[t, j]] = c;
                cache.tanh_cell[[t, j]] = tc;
                cache.hidden[[t, j]] = go * tc;
            }
            h_prev.assign(&cache.hidden.row(t));
            c_prev.assign(&cache.cell.row(t));
        }
        Ok(cache)
    }

    fn backward_dir(
        &self,
        dir: &str,
        cache: &LstmDirCache,
        dh_seq: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        let wx = p.view2(&format!("{dir}.wx"))?;
        let wh = p.view2(&format!("{dir}.wh"))?;
        let t_len = cache.x.nrows();
        let h = self.hidden;

        let mut dwx = Array2::zeros((4 * h, self.in_dim));
        let mut dwh = Array2::zeros((4 * h, h));
        let mut db = Array1::zeros(4 * h);
        let mut dx = Array2::zeros(cache.x.raw_dim());

        let mut dh_carry: Array1<f64> = Array1::zeros(h);
        let mut dc_carry: Array1<f64> = Array1::zeros(h);
        let mut da = Array1::zeros(4 * h);
        for t in (0..t_len).rev() {
            for j in 0..h {
                let dh = dh_seq[[t, j]] + dh_carry[j];
                let go = cache.gate_o[[t, j]];
                let tc = cache.tanh_cell[[t, j]];
                let dc = dh * go * (1.0 - tc * tc) + dc_carry[j];
                let gi = cache.gate_i[[t, j]];
                let gf = cache.gate_f[[t, j]];
                let gg = cache.gate_g[[t, j]];
                let c_prev = if t > 0 { cache.cell[[t - 1, j]] } else { 0.0 };

                da[j] = dc * gg * gi * (1.0 - gi);
                da[h + j] = dc * c_prev * gf * (1.0 - gf);
                da[2 * h + j] = dc * gi * (1.0 - gg * gg);
                da[3 * h + j] = dh * tc * go * (1.0 - go);
                dc_carry[j] = dc * gf;
            }
            let x_t = cache.x.row(t);
            for r in 0..4 * h {
                let d = da[r];
                if d != 0.0 {
                    for c in 0..self.in_dim {
                        dwx[[r, c]] += d * x_t[c];
                    }
                }
            }
            if t > 0 {
                let h_prev = cache.hidden.row(t - 1);
                for r in 0..4 * h {
                    let d = da[r];
                    if d != 0.0 {
                        for c in 0..h {
                            dwh[[r, c]] += d * h_prev[c];
                        }
                    }
                }
            }
            db += &da;
            dx.row_mut(t).assign(&wx.t().dot(&da));
            dh_carry = wh.t().dot(&da);
        }
        g.add_to(&format!("{dir}.wx"), &dwx.into_dyn())?;
        g.add_to(&format!("{dir}.wh"), &dwh.into_dyn())?;
        g.add_to(&format!("{dir}.b"), &db.into_dyn())?;
        Ok(dx)
    }

    pub fn forward(&self, x: &Array2<f64>, p: &ParameterStore) -> Result<(Array2<f64>, LstmCache)> {
        assert_eq!(x.ncols(), self.in_dim, "lstm {}: width mismatch", self.name);
        let t_len = x.nrows();
        let fwd = self.run_dir(&format!("{}.fwd", self.name), x, p)?;
        if !self.bidirectional {
            let out = fwd.hidden.clone();
            return Ok((out, LstmCache { fwd, bwd: None }));
        }
        let x_rev = reverse_rows(x);
        let bwd = self.run_dir(&format!("{}.bwd", self.name), &x_rev, p)?;
        let mut out = Array2::zeros((t_len, 2 * self.hidden));
        out.slice_mut(s![.., ..self.hidden]).assign(&fwd.hidden);
        out.slice_mut(s![.., self.hidden..])
            .assign(&reverse_rows(&bwd.hidden));
        Ok((out, LstmCache { fwd, bwd: Some(bwd) }))
    }

    pub fn backward(
        &self,
        cache: &LstmCache,
        dout: &Array2<f64>,
        p: &ParameterStore,
        g: &mut ParameterStore,
    ) -> Result<Array2<f64>> {
        if !self.bidirectional {
            return self.backward_dir(&format!("{}.fwd", self.name), &cache.fwd, dout, p, g);
        }
        let dh_fwd = dout.slice(s![.., ..self.hidden]).to_owned();
        let dh_bwd = reverse_rows(&dout.slice(s![.., self.hidden..]).to_owned());
        let dx_fwd = self.backward_dir(&format!("{}.fwd", self.name), &cache.fwd, &dh_fwd, p, g)?;
        let dx_bwd = self.backward_dir(
            &format!("{}.bwd", self.name),
            cache.bwd.as_ref().unwrap(),
            &dh_bwd,
            p,
            g,
        )?;
        Ok(dx_fwd + reverse_rows(&dx_bwd))
    }
}

fn reverse_rows(x: &Array2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, GradCheckTolerance};
    use ndarray::Array2;
    use rand::{RngExt, SeedableRng};

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn check(bidirectional: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = Lstm::new("l", 3, 4, bidirectional);
        let mut params = ParameterStore::new();
        lstm.init(&mut params, &mut rng).unwrap();
        let x = random_matrix(6, 3, &mut rng);
        params.insert("x", x.into_dyn()).unwrap();
        let r = random_matrix(6, lstm.out_dim(), &mut rng);

        let report = grad_check(
            &move |p: &ParameterStore| {
                let x = p.get("x").unwrap().view().into_dimensionality().unwrap().to_owned();
                let (y, cache) = lstm.forward(&x, p)?;
                let loss = (&y * &r).sum();
                let mut g = ParameterStore::new();
                let dx = lstm.backward(&cache, &r, p, &mut g)?;
                g.insert("x", dx.into_dyn()).unwrap();
                Ok((loss, g))
            },
            &mut params,
            60,
            1e-5,
            11,
        )
        .unwrap();
        assert!(
            report.max_rel_err < GradCheckTolerance::DEFAULT,
            "bidirectional={bidirectional}: max relative error {} at {}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn unidirectional_gradients_match_finite_differences() {
        check(false, 5);
    }

    #[test]
    fn bidirectional_gradients_match_finite_differences() {
        check(true, 6);
    }

    #[test]
    fn bidirectional_output_width_doubles() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lstm = Lstm::new("l", 2, 3, true);
        let mut params = ParameterStore::new();
        lstm.init(&mut params, &mut rng).unwrap();
        let x = random_matrix(5, 2, &mut rng);
        let (y, _) = lstm.forward(&x, &params).unwrap();
        assert_eq!(y.dim(), (5, 6));
    }
}
