use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ode::{integrate_step, ControlledOde};
use crate::error::{Error, Result};

/// RK4 substeps per control step used when executing on an environment.
pub const INTEGRATION_SUBSTEPS: usize = 10;

/// Anything that maps (time, control step, state) to an action.
pub trait Policy {
    fn act(&mut self, t: f64, step: usize, x: &[f64]) -> Result<Vec<f64>>;
}

/// A fixed open-loop action sequence; the last action is held past its end.
#[derive(Debug, Clone)]
pub struct OpenLoop(pub Vec<Vec<f64>>);

impl Policy for OpenLoop {
    fn act(&mut self, _t: f64, step: usize, _x: &[f64]) -> Result<Vec<f64>> {
        self.0
            .get(step)
            .or_else(|| self.0.last())
            .cloned()
            .ok_or_else(|| Error::Shape("empty open-loop plan".into()))
    }
}

/// Wraps a closure `x -> u` as a state-feedback policy.
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&[f64]) -> Vec<f64>> Policy for FnPolicy<F> {
    fn act(&mut self, _t: f64, _step: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub control_freq: f64,
    /// Control-step start times, `k / ν`.
    pub timestamps: Vec<f64>,
    /// State at the start of each control step.
    pub states: Vec<Vec<f64>>,
    /// Held (clipped) action of each control step.
    pub actions: Vec<Vec<f64>>,
    /// Reward rate sampled at the start of each control step.
    pub rewards: Vec<f64>,
    /// State at the horizon.
    pub final_state: Vec<f64>,
    /// Left-endpoint quadrature of the reward rate.
    pub total_return: f64,
}

#[derive(Serialize)]
struct StepRecord<'a> {
    t: f64,
    x: &'a [f64],
    u: &'a [f64],
    r: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Left-endpoint quadrature Σ r_k / ν of the stored reward samples.
    pub fn recompute_return(&self) -> f64 {
        quadrature(&self.rewards, self.control_freq)
    }

    /// One JSON object per control step: `{"t":..,"x":[..],"u":[..],"r":..}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for k in 0..self.len() {
            let rec = StepRecord {
                t: self.timestamps[k],
                x: &self.states[k],
                u: &self.actions[k],
                r: self.rewards[k],
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub(crate) fn quadrature(samples: &[f64], freq: f64) -> f64 {
    samples.iter().sum::<f64>() / freq
}

/// Number of control steps `T·ν`, which must be a whole number.
pub fn control_steps(horizon: f64, freq: f64) -> Result<usize> {
    if !(freq > 0.0) {
        return Err(Error::Config(format!("control frequency must be positive, got {freq}")));
    }
    let steps = horizon * freq;
    let rounded = steps.round();
    if (steps - rounded).abs() > 1e-9 * steps.max(1.0) || rounded < 1.0 {
        return Err(Error::Config(format!(
            "horizon {horizon} s at {freq} Hz is not a whole number of control steps"
        )));
    }
    Ok(rounded as usize)
}

/// Runs `policy` on `ode` for the full horizon with zero-order-hold control
/// at `freq` Hz. Out-of-bounds actions are clipped and stored clipped.
pub fn rollout(ode: &ControlledOde, policy: &mut dyn Policy, freq: f64) -> Result<Trajectory> {
    let steps = control_steps(ode.horizon, freq)?;
    let dt = 1.0 / (freq * INTEGRATION_SUBSTEPS as f64);
    let mut x = ode.initial_state.clone();
    let mut traj = Trajectory {
        control_freq: freq,
        timestamps: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        final_state: Vec::new(),
        total_return: 0.0,
    };
    for k in 0..steps {
        let t = k as f64 / freq;
        let mut u = policy.act(t, k, &x)?;
        if u.len() != ode.action_dim {
            return Err(Error::Shape(format!(
                "policy returned {} action entries, expected {}",
                u.len(),
                ode.action_dim
            )));
        }
        ode.clip_action(&mut u);
        traj.timestamps.push(t);
        traj.rewards.push(ode.reward(&x, &u));
        traj.states.push(x.clone());
        for _ in 0..INTEGRATION_SUBSTEPS {
            x = integrate_step(ode, &x, &u, dt)?;
        }
        traj.actions.push(u);
    }
    traj.final_state = x;
    traj.total_return = traj.recompute_return();
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::env::{mountaincar_env, pendulum_env};

    fn constant_reward(rate: f64) -> ControlledOde {
        ControlledOde::new(
            "const",
            1,
            1,
            Arc::new(|_x, u, out| out[0] = u[0]),
            Arc::new(move |_x, _u| rate),
        )
        .with_horizon(2.5)
    }

    #[test]
    fn pendulum_rollout_has_fifty_steps() {
        let traj = rollout(&pendulum_env(), &mut OpenLoop(vec![vec![0.0]]), 20.0).unwrap();
        assert_eq!(traj.len(), 50);
        assert_eq!(traj.timestamps[0], 0.0);
        assert!(traj.timestamps.windows(2).all(|w| w[1] > w[0]));
        assert!(*traj.timestamps.last().unwrap() <= 2.5);
    }

    #[test]
    fn zero_reward_gives_zero_return() {
        let traj = rollout(&constant_reward(0.0), &mut OpenLoop(vec![vec![0.7]]), 20.0).unwrap();
        assert_eq!(traj.total_return, 0.0);
    }

    #[test]
    fn constant_reward_integrates_to_horizon() {
        let traj = rollout(&constant_reward(1.0), &mut OpenLoop(vec![vec![0.0]]), 20.0).unwrap();
        assert!((traj.total_return - 2.5).abs() < 1e-12);
        assert!((traj.recompute_return() - traj.total_return).abs() < 1e-12);
    }

    #[test]
    fn actions_are_clipped_and_recorded_clipped() {
        let traj = rollout(&pendulum_env(), &mut OpenLoop(vec![vec![5.0]]), 20.0).unwrap();
        assert!(traj.actions.iter().all(|u| u[0] == 2.0));
    }

    #[test]
    fn fractional_step_count_is_rejected() {
        assert!(rollout(&pendulum_env(), &mut OpenLoop(vec![vec![0.0]]), 3.0).is_err());
    }

    #[test]
    fn mountaincar_states_stay_in_bounds() {
        let env = mountaincar_env();
        let mut policy = FnPolicy(|x: &[f64]| vec![if x[1] >= 0.0 { 1.0 } else { -1.0 }]);
        let traj = rollout(&env, &mut policy, 1.0).unwrap();
        for x in traj.states.iter().chain(std::iter::once(&traj.final_state)) {
            assert!((-1.2..=0.6).contains(&x[0]) && (-0.07..=0.07).contains(&x[1]));
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let env = pendulum_env();
        let plan: Vec<Vec<f64>> = (0..50).map(|k| vec![(k as f64 * 0.3).sin() * 2.0]).collect();
        let a = rollout(&env, &mut OpenLoop(plan.clone()), 20.0).unwrap();
        let b = rollout(&env, &mut OpenLoop(plan), 20.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_has_one_line_per_step() {
        let traj = rollout(&pendulum_env(), &mut OpenLoop(vec![vec![1.0]]), 20.0).unwrap();
        let mut buf = Vec::new();
        traj.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 50);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["t"], 0.0);
        assert_eq!(first["x"].as_array().unwrap().len(), 3);
        assert_eq!(first["u"][0], 1.0);
    }
}
