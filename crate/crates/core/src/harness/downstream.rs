//! Alternative rewards on the same dynamics, and zero-shot evaluation of a
//! frozen model on them.

use std::sync::Arc;

use crate::agents::{AgentKind, ModelView};
use crate::env::{pendulum_angle, rollout, wrap_angle, ControlledOde, RewardFn, Trajectory};
use crate::error::{Error, Result};
use crate::gp::StatisticalModel;
use crate::objective::ObjectiveSpec;

use super::config::PlannerSection;
use super::episode::PlanningPolicy;

pub const PENDULUM_TASKS: [&str; 4] = ["swing-up", "balance-upright", "swing-down", "keep-down"];
pub const MOUNTAINCAR_TASKS: [&str; 2] = ["go-up-right", "go-up-left"];

/// Left goal for mountain car: position at or beyond this, moving left.
pub const MOUNTAINCAR_LEFT_GOAL: f64 = -1.15;

#[derive(Clone)]
pub struct DownstreamTask {
    pub name: String,
    pub reward: RewardFn,
    pub initial_state: Option<Vec<f64>>,
    /// Human-readable reward definition, recorded in run manifests.
    pub formula: &'static str,
}

pub fn primary_task(env: &str) -> &'static str {
    if env.starts_with("pendulum") {
        PENDULUM_TASKS[0]
    } else {
        MOUNTAINCAR_TASKS[0]
    }
}

pub fn task_names(env: &str) -> &'static [&'static str] {
    if env.starts_with("pendulum") {
        &PENDULUM_TASKS
    } else {
        &MOUNTAINCAR_TASKS
    }
}

fn pendulum_up(x: &[f64], u: &[f64]) -> f64 {
    let theta = pendulum_angle(x);
    -theta * theta - 0.1 * x[2] * x[2] - 0.02 * u[0] * u[0]
}

fn pendulum_down(x: &[f64], u: &[f64]) -> f64 {
    let d = wrap_angle(pendulum_angle(x) - std::f64::consts::PI);
    -d * d - 0.1 * x[2] * x[2] - 0.02 * u[0] * u[0]
}

fn mountaincar_left(x: &[f64], u: &[f64]) -> f64 {
    let bonus = if x[0] <= MOUNTAINCAR_LEFT_GOAL && x[1] <= 0.0 {
        100.0
    } else {
        0.0
    };
    -0.1 * u[0] * u[0] + bonus
}

pub fn downstream_task(ode: &ControlledOde, name: &str) -> Result<DownstreamTask> {
    let up = vec![1.0, 0.0, 0.0];
    let down = vec![-1.0, 0.0, 0.0];
    let task = |reward: RewardFn, x0: Option<Vec<f64>>, formula| DownstreamTask {
        name: name.to_string(),
        reward,
        initial_state: x0,
        formula,
    };
    let up_formula = "-θ² - 0.1 θ̇² - 0.02 u²";
    let down_formula = "-wrap(θ - π)² - 0.1 θ̇² - 0.02 u²";
    if ode.name.starts_with("pendulum") {
        return match name {
            "swing-up" => Ok(task(Arc::new(pendulum_up), Some(down), up_formula)),
            "balance-upright" => Ok(task(Arc::new(pendulum_up), Some(up), up_formula)),
            "swing-down" => Ok(task(Arc::new(pendulum_down), Some(up), down_formula)),
            "keep-down" => Ok(task(Arc::new(pendulum_down), Some(down), down_formula)),
            other => Err(unknown(&ode.name, other)),
        };
    }
    if ode.name.starts_with("mountaincar") {
        return match name {
            "go-up-right" => Ok(task(
                ode.reward_fn().clone(),
                None,
                "-0.1 u² + 100·1{x₁ ≥ 0.45 ∧ x₂ ≥ 0}",
            )),
            "go-up-left" => Ok(task(
                Arc::new(mountaincar_left),
                None,
                "-0.1 u² + 100·1{x₁ ≤ -1.15 ∧ x₂ ≤ 0}",
            )),
            other => Err(unknown(&ode.name, other)),
        };
    }
    Err(Error::Config(format!("no tasks defined for environment '{}'", ode.name)))
}

fn unknown(env: &str, task: &str) -> Error {
    Error::Config(format!(
        "unknown task '{task}' for {env} (expected one of {:?})",
        task_names(env)
    ))
}

/// The environment with the task's reward and start state.
pub fn task_ode(base: &ControlledOde, name: &str) -> Result<ControlledOde> {
    let task = downstream_task(base, name)?;
    let mut ode = base.clone().with_reward(task.reward);
    if let Some(x0) = task.initial_state {
        ode = ode.with_initial_state(x0);
    }
    Ok(ode)
}

/// Plans greedily on the frozen `model` under the task reward and executes
/// on the true dynamics.
pub fn downstream_eval(
    model: &StatisticalModel,
    base: &ControlledOde,
    task: &str,
    planner: &PlannerSection,
    freq: f64,
    seed: u64,
) -> Result<Trajectory> {
    let ode = task_ode(base, task)?;
    let mut policy = PlanningPolicy::new(
        &ode,
        AgentKind::Mean,
        ObjectiveSpec::greedy(),
        ModelView::gp(model),
        planner,
        freq,
        seed,
    )?;
    rollout(&ode, &mut policy, freq)
}
