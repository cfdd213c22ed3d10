//! Central-finite-difference verification of analytic gradients.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::ParameterStore;

/// Canonical tolerances for gradient verification in double precision.
pub struct GradCheckTolerance;

impl GradCheckTolerance {
    /// Maximum relative error accepted with the default probe step.
    pub const DEFAULT: f64 = 1e-4;
    /// Central-difference step.
    pub const STEP: f64 = 1e-5;
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `"name[flat_index]"` of the worst probe.
    pub worst: String,
    pub probes: usize,
}

/// Probes `probe_count` randomly chosen scalar parameters and compares the
/// analytic gradient to `(loss(w+h) - loss(w-h)) / 2h`.
///
/// `f` must return the loss and its full analytic gradient, and must be
/// deterministic: any internal sampling has to be re-seeded per call.
/// Parameters are restored exactly after probing. The relative error uses
/// `|a - n| / max(|a|, |n|, 1e-5)` so that near-zero gradients are judged on
/// an absolute scale above finite-difference noise.
pub fn grad_check<F>(
    f: &F,
    params: &mut ParameterStore,
    probe_count: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParameterStore) -> Result<(f64, ParameterStore)>,
{
    assert!(h > 0.0);
    let (loss0, grads) = f(params)?;
    if !loss0.is_finite() {
        return Err(Error::NonFinite {
            context: "grad_check base loss".to_string(),
        });
    }

    let sizes: Vec<(String, usize)> = params
        .iter()
        .map(|(name, arr)| (name.to_string(), arr.len()))
        .collect();
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Ok(GradCheckReport {
            max_rel_err: 0.0,
            worst: String::new(),
            probes: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err = 0.0f64;
    let mut worst = String::new();

    for _ in 0..probe_count {
        let mut flat = rng.random_range(0..total);
        let mut chosen = 0usize;
        while flat >= sizes[chosen].1 {
            flat -= sizes[chosen].1;
            chosen += 1;
        }
        let name = sizes[chosen].0.clone();

        let original = params.get(&name).unwrap().as_slice().unwrap()[flat];
        let mut eval_at = |value: f64| -> Result<f64> {
            params.get_mut(&name).unwrap().as_slice_mut().unwrap()[flat] = value;
            let (loss, _) = f(params)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("grad_check probe of {name}[{flat}]"),
                });
            }
            Ok(loss)
        };
        let loss_plus = eval_at(original + h)?;
        let loss_minus = eval_at(original - h)?;
        params.get_mut(&name).unwrap().as_slice_mut().unwrap()[flat] = original;

        let numeric = (loss_plus - loss_minus) / (2.0 * h);
        let analytic = grads
            .get(&name)
            .map(|g| g.as_slice().unwrap()[flat])
            .unwrap_or(0.0);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst = format!("{name}[{flat}]");
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst,
        probes: probe_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn quadratic_loss_matches_analytic_gradient() {
        // loss = w^2 at w = 3: analytic 6 vs central difference 6 within 1e-6.
        let mut params = ParameterStore::new();
        params
            .insert("w", ArrayD::from_elem(IxDyn(&[1]), 3.0))
            .unwrap();
        let report = grad_check(
            &|p: &ParameterStore| {
                let w = p.get("w").unwrap()[0];
                let mut g = ParameterStore::new();
                g.insert("w", ArrayD::from_elem(IxDyn(&[1]), 2.0 * w)).unwrap();
                Ok((w * w, g))
            },
            &mut params,
            4,
            1e-5,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "got {}", report.max_rel_err);
        // Probe restores the original value.
        assert_eq!(params.get("w").unwrap()[0], 3.0);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut params = ParameterStore::new();
        params
            .insert("w", ArrayD::from_elem(IxDyn(&[1]), 2.0))
            .unwrap();
        let report = grad_check(
            &|p: &ParameterStore| {
                let w = p.get("w").unwrap()[0];
                let mut g = ParameterStore::new();
                // Deliberately wrong: claims gradient 3w for loss w^2.
                g.insert("w", ArrayD::from_elem(IxDyn(&[1]), 3.0 * w)).unwrap();
                Ok((w * w, g))
            },
            &mut params,
            2,
            1e-5,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err > 0.1);
    }

    #[test]
    fn non_finite_loss_reports_parameter_name() {
        let mut params = ParameterStore::new();
        params
            .insert("w", ArrayD::from_elem(IxDyn(&[1]), 1.0))
            .unwrap();
        let err = grad_check(
            &|p: &ParameterStore| {
                let w = p.get("w").unwrap()[0];
                let loss = if w == 1.0 { 1.0 } else { f64::NAN };
                Ok((loss, ParameterStore::new()))
            },
            &mut params,
            1,
            1e-5,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { context } if context.contains("w")));
    }
}
