use super::icem::{plan, ActionPlan, CandidateEvaluator, IcemConfig};
use crate::env::Interval;
use crate::error::Result;
use crate::rng;

/// Receding-horizon driver around [`plan`].
///
/// Each replan warm-starts the sampling mean from the previous plan shifted
/// by the number of steps executed since, padded with its last action.
#[derive(Debug, Clone)]
pub struct MpcController {
    cfg: IcemConfig,
    bounds: Vec<Interval>,
    replan_interval: usize,
    previous: Option<ActionPlan>,
    cursor: usize,
    calls: u64,
    replans: u64,
}

impl MpcController {
    pub fn new(cfg: IcemConfig, bounds: Vec<Interval>, replan_interval: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(MpcController {
            cfg,
            bounds,
            replan_interval: replan_interval.max(1),
            previous: None,
            cursor: 0,
            calls: 0,
            replans: 0,
        })
    }

    pub fn config(&self) -> &IcemConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn last_plan(&self) -> Option<&ActionPlan> {
        self.previous.as_ref()
    }

    /// Number of plans computed so far.
    pub fn replans(&self) -> u64 {
        self.replans
    }

    pub fn reset(&mut self) {
        self.previous = None;
        self.cursor = 0;
    }

    /// Mean for the next replan: zeros (clipped into bounds) on a cold start.
    pub fn warm_start(&self) -> Vec<f64> {
        let (h, d) = (self.cfg.horizon, self.dim());
        match &self.previous {
            None => (0..h * d).map(|i| self.bounds[i % d].clamp(0.0)).collect(),
            Some(p) => {
                let shift = self.cursor.min(h);
                let last = p.action(h - 1);
                let mut out = Vec::with_capacity(h * d);
                out.extend_from_slice(&p.actions[shift * d..]);
                while out.len() < h * d {
                    out.extend_from_slice(last);
                }
                out
            }
        }
    }

    fn initial_std(&self) -> Vec<f64> {
        let d = self.dim();
        (0..self.cfg.horizon * d)
            .map(|i| {
                let w = self.bounds[i % d].width();
                if w.is_finite() {
                    self.cfg.init_std_fraction * w
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Returns the next action, replanning when due. `seed` keys this call's
    /// planner randomness.
    pub fn act(&mut self, evaluator: &dyn CandidateEvaluator, seed: u64) -> Result<Vec<f64>> {
        let due = self.previous.is_none() || self.cursor >= self.replan_interval;
        if due {
            let mean = self.warm_start();
            let std = self.initial_std();
            let mut cfg = self.cfg.clone();
            cfg.seed = rng::derive(self.cfg.seed, &[seed, self.calls]);
            let p = plan(evaluator, &self.bounds, &mean, &std, &cfg)?;
            self.previous = Some(p);
            self.cursor = 0;
            self.replans += 1;
        }
        self.calls += 1;
        let p = self.previous.as_ref().expect("plan exists after replanning");
        let step = self.cursor.min(p.horizon - 1);
        self.cursor += 1;
        Ok(p.action(step).to_vec())
    }
}
