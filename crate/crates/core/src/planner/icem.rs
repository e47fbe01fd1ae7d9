use serde::{Deserialize, Serialize};

use super::noise::colored_noise;
use crate::env::Interval;
use crate::error::{Error, Result};
use crate::rng;

/// Scores a batch of candidate action sequences.
///
/// Each candidate is a row-major `horizon × dim` vector. Implementations must
/// derive any randomness for candidate `i` from `(seed, i)` alone, so a batch
/// can be split or reordered without changing any score.
pub trait CandidateEvaluator {
    fn evaluate(&self, candidates: &[Vec<f64>], seed: u64) -> Result<Vec<f64>>;
}

impl<F> CandidateEvaluator for F
where
    F: Fn(&[Vec<f64>], u64) -> Result<Vec<f64>>,
{
    fn evaluate(&self, candidates: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
        self(candidates, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcemConfig {
    pub horizon: usize,
    pub samples: usize,
    pub elites: usize,
    pub iterations: usize,
    pub momentum: f64,
    pub noise_exponent: f64,
    pub elite_keep_fraction: f64,
    /// Initial sampling stddev as a fraction of each dimension's range.
    pub init_std_fraction: f64,
    pub seed: u64,
}

impl Default for IcemConfig {
    fn default() -> Self {
        Self::pendulum()
    }
}

impl IcemConfig {
    pub fn pendulum() -> Self {
        IcemConfig {
            horizon: 30,
            samples: 500,
            elites: 50,
            iterations: 10,
            momentum: 0.2,
            noise_exponent: 2.0,
            elite_keep_fraction: 0.3,
            init_std_fraction: 0.5,
            seed: 0,
        }
    }

    pub fn mountaincar() -> Self {
        IcemConfig {
            horizon: 100,
            iterations: 5,
            ..Self::pendulum()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("planner: {m}")));
        if self.horizon == 0 {
            return fail("horizon must be positive");
        }
        if self.samples == 0 || self.elites == 0 {
            return fail("samples and elites must be positive");
        }
        if self.elites > self.samples {
            return fail("elites must not exceed samples");
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if !(self.noise_exponent >= 0.0) {
            return fail("noise exponent must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.elite_keep_fraction) {
            return fail("elite keep fraction must lie in [0, 1]");
        }
        if !(self.init_std_fraction >= 0.0) {
            return fail("initial stddev fraction must be non-negative");
        }
        Ok(())
    }

    fn kept_elites(&self) -> usize {
        (self.elite_keep_fraction * self.elites as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub best: f64,
    pub elite_mean: f64,
    pub elite_count: usize,
    pub evaluated: usize,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionPlan {
    pub horizon: usize,
    pub dim: usize,
    /// Best sequence found, row-major `horizon × dim`.
    pub actions: Vec<f64>,
    pub objective: f64,
    /// Final sampling distribution.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub iterations: Vec<IterationStats>,
}

impl ActionPlan {
    pub fn action(&self, step: usize) -> &[f64] {
        &self.actions[step * self.dim..(step + 1) * self.dim]
    }
}

struct Scored {
    value: f64,
    candidate: Vec<f64>,
}

/// Runs iCEM from the given initial sampling distribution.
///
/// `bounds` has one interval per action dimension; `mean` and `std` are
/// row-major `horizon × dim`.
pub fn plan(
    evaluator: &dyn CandidateEvaluator,
    bounds: &[Interval],
    mean: &[f64],
    std: &[f64],
    cfg: &IcemConfig,
) -> Result<ActionPlan> {
    cfg.validate()?;
    let dim = bounds.len();
    let len = cfg.horizon * dim;
    if dim == 0 || mean.len() != len || std.len() != len {
        return Err(Error::Shape(format!(
            "planner expects {} × {} mean and stddev, got {} and {}",
            cfg.horizon,
            dim,
            mean.len(),
            std.len()
        )));
    }
    let mut mean = mean.to_vec();
    let mut std = std.to_vec();
    let mut best: Option<Scored> = None;
    let mut kept: Vec<Scored> = Vec::new();
    let mut stats = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let noise = colored_noise(
            cfg.horizon,
            dim,
            cfg.samples,
            cfg.noise_exponent,
            rng::derive(cfg.seed, &[it as u64, 0]),
        );
        let mut candidates: Vec<Vec<f64>> = (0..cfg.samples)
            .map(|s| {
                let mut c = vec![0.0; len];
                for t in 0..cfg.horizon {
                    for d in 0..dim {
                        let i = t * dim + d;
                        c[i] = bounds[d].clamp(mean[i] + std[i] * noise.get(s, d, t));
                    }
                }
                c
            })
            .collect();
        // The last round scores the final mean in place of one noisy sample.
        if it + 1 == cfg.iterations {
            for (i, c) in candidates[cfg.samples - 1].iter_mut().enumerate() {
                *c = bounds[i % dim].clamp(mean[i]);
            }
        }
        let values = evaluator.evaluate(&candidates, rng::derive(cfg.seed, &[it as u64, 1]))?;
        if values.len() != candidates.len() {
            return Err(Error::Shape(format!(
                "evaluator returned {} scores for {} candidates",
                values.len(),
                candidates.len()
            )));
        }
        let mut pool: Vec<Scored> = std::mem::take(&mut kept);
        let mut discarded = 0;
        for (candidate, value) in candidates.into_iter().zip(values) {
            if value.is_finite() {
                pool.push(Scored { value, candidate });
            } else {
                discarded += 1;
            }
        }
        if pool.is_empty() {
            return Err(Error::Planning(format!(
                "all {} candidates scored non-finite in iteration {it}",
                cfg.samples
            )));
        }
        pool.sort_by(|a, b| b.value.total_cmp(&a.value));
        pool.truncate(cfg.elites);

        if best.as_ref().map_or(true, |b| pool[0].value > b.value) {
            best = Some(Scored {
                value: pool[0].value,
                candidate: pool[0].candidate.clone(),
            });
        }

        let n = pool.len() as f64;
        for i in 0..len {
            let m = pool.iter().map(|e| e.candidate[i]).sum::<f64>() / n;
            let v = pool.iter().map(|e| (e.candidate[i] - m).powi(2)).sum::<f64>() / n;
            mean[i] = cfg.momentum * mean[i] + (1.0 - cfg.momentum) * m;
            std[i] = cfg.momentum * std[i] + (1.0 - cfg.momentum) * v.sqrt();
        }
        let elite_mean = pool.iter().map(|e| e.value).sum::<f64>() / n;
        let row = IterationStats {
            best: best.as_ref().map_or(f64::NAN, |b| b.value),
            elite_mean,
            elite_count: pool.len(),
            evaluated: cfg.samples,
            discarded,
        };
        log::debug!(
            "icem iteration {it}: best {:.4} elite mean {:.4} ({} elites, {} discarded)",
            row.best,
            row.elite_mean,
            row.elite_count,
            row.discarded
        );
        stats.push(row);
        pool.truncate(cfg.kept_elites());
        kept = pool;
    }

    let best = best.expect("at least one iteration ran");
    Ok(ActionPlan {
        horizon: cfg.horizon,
        dim,
        actions: best.candidate,
        objective: best.value,
        mean,
        std,
        iterations: stats,
    })
}
