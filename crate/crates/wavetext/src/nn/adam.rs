use std::collections::HashMap;

use ndarray::ArrayD;

use crate::error::{Error, Result};
use crate::nn::ParameterStore;

/// Optimizer state for Adam: per-parameter first and second moment
/// estimates plus a global step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first_moment: HashMap<String, ArrayD<f64>>,
    second_moment: HashMap<String, ArrayD<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            first_moment: HashMap::new(),
            second_moment: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, name: &str) -> Option<(&ArrayD<f64>, &ArrayD<f64>)> {
        Some((self.first_moment.get(name)?, self.second_moment.get(name)?))
    }
}

/// One Adam update over every entry of `grads`.
///
/// `grads` may cover a subset of `params`; entries absent from `grads` are
/// left untouched, which is how frozen sub-networks are expressed. Moment
/// buffers are created lazily on a parameter's first update.
pub fn adam_step(
    params: &mut ParameterStore,
    grads: &ParameterStore,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    assert!(lr > 0.0, "learning rate must be positive, got {lr}");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for (name, g) in grads.iter() {
        let p = params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        let m = state
            .first_moment
            .entry(name.to_string())
            .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
        let v = state
            .second_moment
            .entry(name.to_string())
            .or_insert_with(|| ArrayD::zeros(g.raw_dim()));

        azip_update(p, g, m, v, state.beta1, state.beta2, state.eps, lr, bc1, bc2);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    p: &mut ArrayD<f64>,
    g: &ArrayD<f64>,
    m: &mut ArrayD<f64>,
    v: &mut ArrayD<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    ndarray::Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
}
