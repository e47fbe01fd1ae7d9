//! The blended running objective `(r + λ‖σ‖) / (1 + λ)` and the schedules
//! that move the weight `λ` between episodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAMBDA_MIN: f64 = 1e-4;
pub const LAMBDA_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase", deny_unknown_fields)]
pub enum Regime {
    /// Extrinsic reward only.
    Greedy,
    Static {
        lambda: f64,
    },
    /// `λ_n = λ₀ (1 − n/N)`.
    Annealing {
        lambda0: f64,
        episodes: usize,
    },
    /// Log-space gradient steps on `λ` against a Polyak-averaged target plan.
    Auto {
        lambda_init: f64,
        #[serde(default = "default_auto_lr")]
        learning_rate: f64,
        #[serde(default = "default_polyak")]
        polyak: f64,
    },
    /// Uncertainty only: the `λ → ∞` limit.
    Unsupervised,
}

fn default_auto_lr() -> f64 {
    0.1
}

fn default_polyak() -> f64 {
    0.005
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub regime: Regime,
    pub episode: usize,
    pub lambda: f64,
}

impl ObjectiveSpec {
    pub fn new(regime: Regime) -> Result<Self> {
        let lambda = match &regime {
            Regime::Greedy => 0.0,
            Regime::Static { lambda } => *lambda,
            Regime::Annealing { lambda0, episodes } => {
                if *episodes == 0 {
                    return Err(Error::Config("annealing needs at least one episode".into()));
                }
                *lambda0
            }
            Regime::Auto {
                lambda_init,
                learning_rate,
                polyak,
            } => {
                if !(*lambda_init > 0.0) {
                    return Err(Error::Config("auto-tuned lambda must start positive".into()));
                }
                if !(learning_rate.is_finite() && *learning_rate >= 0.0) {
                    return Err(Error::Config("auto-tune learning rate must be non-negative".into()));
                }
                if !(0.0..=1.0).contains(polyak) {
                    return Err(Error::Config("polyak rate must lie in [0, 1]".into()));
                }
                lambda_init.clamp(LAMBDA_MIN, LAMBDA_MAX)
            }
            Regime::Unsupervised => f64::INFINITY,
        };
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
        }
        Ok(ObjectiveSpec {
            regime,
            episode: 0,
            lambda,
        })
    }

    pub fn greedy() -> Self {
        Self::new(Regime::Greedy).expect("greedy spec is valid")
    }

    pub fn is_greedy(&self) -> bool {
        self.lambda == 0.0
    }

    pub fn is_unsupervised(&self) -> bool {
        matches!(self.regime, Regime::Unsupervised)
    }

    /// Running reward rate for extrinsic rate `r` and uncertainty norm `s`.
    pub fn blend(&self, r: f64, s: f64) -> f64 {
        if self.is_unsupervised() {
            s
        } else {
            blended_reward(self.lambda, r, s)
        }
    }

    /// Sets `λ` for episode `n` of `total`.
    pub fn schedule_step(&mut self, n: usize, total: usize) {
        self.episode = n;
        if let Regime::Annealing { lambda0, .. } = self.regime {
            let frac = if total == 0 { 1.0 } else { (n.min(total) as f64) / total as f64 };
            self.lambda = (lambda0 * (1.0 - frac)).max(0.0);
        }
    }

    /// One auto-tuning step from per-state uncertainty gaps
    /// `‖σ(x, u)‖ − ‖σ(x, ū)‖`. No-op outside the auto regime.
    pub fn auto_tune(&mut self, gaps: &[f64]) {
        if let Regime::Auto { learning_rate, .. } = self.regime {
            self.lambda = auto_tune_step(self.lambda, gaps, learning_rate);
        }
    }

    pub fn polyak_rate(&self) -> Option<f64> {
        match self.regime {
            Regime::Auto { polyak, .. } => Some(polyak),
            _ => None,
        }
    }
}

/// `(r + λ s) / (1 + λ)`, returning `r` exactly at `λ = 0` and never leaving
/// `[min(r, s), max(r, s)]`.
pub fn blended_reward(lambda: f64, r: f64, s: f64) -> f64 {
    if lambda == 0.0 {
        return r;
    }
    if lambda.is_infinite() {
        return s;
    }
    let w = 1.0 / (1.0 + lambda);
    let v = w * r + (lambda * w) * s;
    v.clamp(r.min(s), r.max(s))
}

/// `log λ ← log λ − lr · mean(gaps)`, clamped to `[LAMBDA_MIN, LAMBDA_MAX]`.
pub fn auto_tune_step(lambda: f64, gaps: &[f64], learning_rate: f64) -> f64 {
    if gaps.is_empty() {
        return lambda;
    }
    let g = gaps.iter().sum::<f64>() / gaps.len() as f64;
    if g == 0.0 {
        return lambda;
    }
    (lambda.ln() - learning_rate * g).exp().clamp(LAMBDA_MIN, LAMBDA_MAX)
}

/// Exponential moving average of successive plan means.
#[derive(Debug, Clone, Default)]
pub struct PolyakTarget {
    pub tau: f64,
    value: Option<Vec<f64>>,
}

impl PolyakTarget {
    pub fn new(tau: f64) -> Self {
        PolyakTarget { tau, value: None }
    }

    pub fn value(&self) -> Option<&[f64]> {
        self.value.as_deref()
    }

    pub fn update(&mut self, latest: &[f64]) {
        match &mut self.value {
            Some(v) if v.len() == latest.len() => {
                for (t, &x) in v.iter_mut().zip(latest) {
                    *t = (1.0 - self.tau) * *t + self.tau * x;
                }
            }
            _ => self.value = Some(latest.to_vec()),
        }
    }
}
