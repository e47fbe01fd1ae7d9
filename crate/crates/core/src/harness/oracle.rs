use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::agents::{AgentKind, ModelView};
use crate::env::{rollout, ControlledOde, OpenLoop};
use crate::error::Result;
use crate::gp::TrueDrift;
use crate::objective::ObjectiveSpec;
use crate::rng;

use super::config::PlannerSection;
use super::episode::PlanningPolicy;

pub const ORACLE_ITERATION_FACTOR: usize = 4;
pub const ORACLE_RESTARTS: usize = 3;
const ORACLE_STREAM: u64 = 0x6f72_6163;

/// Seed of the oracle planner, kept apart from the agents' planning streams.
pub fn oracle_seed(planner_seed: u64) -> u64 {
    rng::derive(planner_seed, &[ORACLE_STREAM])
}

/// Estimates the optimal return by planning on the true dynamics with a
/// larger iteration budget. The best of several restarts and of the zero
/// policy is kept.
pub fn oracle_return(ode: &ControlledOde, planner: &PlannerSection, freq: f64, seed: u64) -> Result<f64> {
    let truth = TrueDrift(ode.clone());
    let mut budget = planner.clone();
    budget.icem.iterations *= ORACLE_ITERATION_FACTOR;
    let zero: Vec<f64> = ode.action_bounds.iter().map(|b| b.clamp(0.0)).collect();
    let mut best = rollout(ode, &mut OpenLoop(vec![zero]), freq)?.total_return;
    for restart in 0..ORACLE_RESTARTS {
        let mut policy = PlanningPolicy::new(
            ode,
            AgentKind::Mean,
            ObjectiveSpec::greedy(),
            ModelView::deterministic(&truth),
            &budget,
            freq,
            rng::derive(seed, &[restart as u64]),
        )?;
        let traj = rollout(ode, &mut policy, freq)?;
        log::debug!("oracle restart {restart}: return {:.4}", traj.total_return);
        best = best.max(traj.total_return);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OracleKey {
    pub env: String,
    pub task: String,
    freq_bits: u64,
    horizon_bits: u64,
}

impl OracleKey {
    pub fn new(env: &str, task: &str, freq: f64, horizon: f64) -> Self {
        OracleKey {
            env: env.to_string(),
            task: task.to_string(),
            freq_bits: freq.to_bits(),
            horizon_bits: horizon.to_bits(),
        }
    }
}

/// Oracle estimates shared across the seeds (and runs) of a process.
#[derive(Debug, Default)]
pub struct OracleCache {
    entries: Mutex<HashMap<OracleKey, f64>>,
    hits: AtomicUsize,
}

impl OracleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("oracle cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(&self, key: OracleKey, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
        let mut map = self.entries.lock().expect("oracle cache poisoned");
        if let Some(v) = map.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(*v);
        }
        let v = compute()?;
        map.insert(key, v);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::env::pendulum_env;
    use crate::planner::IcemConfig;

    fn small_planner() -> PlannerSection {
        PlannerSection {
            icem: IcemConfig {
                horizon: 10,
                samples: 30,
                elites: 5,
                iterations: 1,
                ..IcemConfig::pendulum()
            },
            replan_interval: 5,
            model_substeps: 1,
        }
    }

    #[test]
    fn zero_reward_oracle_is_zero() {
        let ode = pendulum_env().with_reward(Arc::new(|_x, _u| 0.0));
        assert_eq!(oracle_return(&ode, &small_planner(), 20.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn upright_oracle_beats_zero_policy() {
        let ode = pendulum_env().with_initial_state(vec![1.0, 0.0, 0.0]);
        let zero = rollout(&ode, &mut OpenLoop(vec![vec![0.0]]), 20.0).unwrap().total_return;
        let o = oracle_return(&ode, &small_planner(), 20.0, 1).unwrap();
        assert!(o >= zero - 1e-12, "{o} < {zero}");
    }

    #[test]
    fn cache_returns_stored_value() {
        let cache = OracleCache::new();
        let key = OracleKey::new("pendulum-gp", "swing-up", 20.0, 2.5);
        assert_eq!(cache.get_or_compute(key.clone(), || Ok(-3.0)).unwrap(), -3.0);
        let v = cache
            .get_or_compute(key, || panic!("cached value must not be recomputed"))
            .unwrap();
        assert_eq!(v, -3.0);
        assert_eq!(cache.hits(), 1);
        assert_eq!(cache.len(), 1);
    }
}
