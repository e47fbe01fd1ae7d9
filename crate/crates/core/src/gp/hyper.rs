//! Type-II maximum likelihood for the RBF hyperparameters.
//!
//! Gradient of the log marginal likelihood with respect to a log
//! hyperparameter θ: `½ tr((ααᵀ - K⁻¹) ∂K/∂θ)`, with
//! `∂K/∂log σ_f² = K_f` and `∂K/∂log ℓ_k = K_f ∘ (Δ_k / ℓ_k)²`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::kernel::RbfKernel;
use super::posterior::{cholesky_with_jitter, signal_gram};
use crate::error::{Error, Result};

const LOG_LENGTHSCALE_RANGE: (f64, f64) = (-6.907_755_278_982_137, 6.907_755_278_982_137);
const LOG_SIGNAL_VAR_RANGE: (f64, f64) = (-23.025_850_929_940_457, 13.815_510_557_964_274);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperOptConfig {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for HyperOptConfig {
    fn default() -> Self {
        HyperOptConfig {
            steps: 100,
            learning_rate: 0.01,
        }
    }
}

/// Log marginal likelihood and its gradient with respect to
/// `[log σ_f², log ℓ_1, .., log ℓ_d]`.
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    targets: &[f64],
    kernel: &RbfKernel,
    noise_var: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = inputs.len();
    let d = kernel.dim();
    let scaled = kernel.scale_rows(inputs.iter().map(|z| z.as_slice()));
    let kf = signal_gram(&scaled, d, kernel.signal_var());
    let mut a = kf.clone();
    for i in 0..n {
        a[(i, i)] += noise_var;
    }
    let (chol, _) = cholesky_with_jitter(&a)?;
    let y = DVector::from_column_slice(targets);
    let alpha = chol.solve(&y);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value =
        -0.5 * y.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let k_inv = chol.inverse();
    let mut grad = vec![0.0; d + 1];
    for j in 0..n {
        for i in 0..n {
            let w = alpha[i] * alpha[j] - k_inv[(i, j)];
            let wk = w * kf[(i, j)];
            grad[0] += wk;
            if i != j {
                let zi = &scaled[i * d..(i + 1) * d];
                let zj = &scaled[j * d..(j + 1) * d];
                for k in 0..d {
                    let diff = zi[k] - zj[k];
                    grad[k + 1] += wk * diff * diff;
                }
            }
        }
    }
    for g in grad.iter_mut() {
        *g *= 0.5;
    }
    Ok((value, grad))
}

fn clamp_params(p: &mut [f64]) {
    p[0] = p[0].clamp(LOG_SIGNAL_VAR_RANGE.0, LOG_SIGNAL_VAR_RANGE.1);
    for l in p[1..].iter_mut() {
        *l = l.clamp(LOG_LENGTHSCALE_RANGE.0, LOG_LENGTHSCALE_RANGE.1);
    }
}

fn to_kernel(p: &[f64]) -> RbfKernel {
    RbfKernel {
        log_signal_var: p[0],
        log_lengthscales: p[1..].to_vec(),
    }
}

/// Adam ascent on the log marginal likelihood in log-hyperparameter space.
///
/// Returns the best iterate seen, which is never worse than `init`. A
/// non-finite gradient or a failed factorisation stops the run and keeps the
/// best finite iterate.
pub fn optimize_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    init: &RbfKernel,
    noise_var: f64,
    cfg: &HyperOptConfig,
) -> Result<RbfKernel> {
    if inputs.is_empty() {
        return Err(Error::Shape("hyperparameter fitting needs at least one observation".into()));
    }
    if cfg.steps == 0 {
        return Ok(init.clone());
    }
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut params: Vec<f64> = std::iter::once(init.log_signal_var)
        .chain(init.log_lengthscales.iter().copied())
        .collect();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;

    for t in 1..=cfg.steps + 1 {
        let (value, grad) = match log_marginal_likelihood(inputs, targets, &to_kernel(&params), noise_var) {
            Ok(r) => r,
            Err(e) if best.is_some() => {
                log::debug!("hyperparameter step {t} aborted: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        if value.is_finite() && best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, params.clone()));
        }
        if t == cfg.steps + 1 {
            break;
        }
        if !grad.iter().all(|g| g.is_finite()) || !value.is_finite() {
            log::debug!("non-finite likelihood gradient at step {t}; keeping last finite iterate");
            break;
        }
        let lr_t = cfg.learning_rate * (1.0 - beta2.powi(t as i32)).sqrt() / (1.0 - beta1.powi(t as i32));
        for i in 0..params.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] += lr_t * m[i] / (v[i].sqrt() + eps);
        }
        clamp_params(&mut params);
    }
    Ok(best.map(|(_, p)| to_kernel(&p)).unwrap_or_else(|| init.clone()))
}
