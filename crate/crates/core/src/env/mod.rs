//! Continuous-time environments and data collection.

mod envs;
mod mss;
mod ode;
mod trajectory;

pub use envs::{
    env_by_name, mountaincar_env, pendulum_angle, pendulum_env, wrap_angle, ENV_NAMES,
    MOUNTAINCAR_GOAL_POSITION,
};
pub use mss::{observe, DerivativeDataset, EquidistantMss, Record};
pub use ode::{integrate_step, rk4_step, ControlledOde, DriftFn, Interval, RewardFn, StateConstraint};
pub use trajectory::{control_steps, rollout, FnPolicy, OpenLoop, Policy, Trajectory};
