use std::f64::consts::PI;
use std::sync::Arc;

use super::ode::{ControlledOde, Interval};
use crate::error::{Error, Result};

pub const ENV_NAMES: [&str; 2] = ["pendulum-gp", "mountaincar-gp"];

const GRAVITY: f64 = 9.81;
const PENDULUM_MASS: f64 = 1.0;
const PENDULUM_LENGTH: f64 = 1.0;

pub const MOUNTAINCAR_GOAL_POSITION: f64 = 0.45;

/// Angle of a (cos θ, sin θ, θ̇) pendulum state, in (-π, π].
pub fn pendulum_angle(x: &[f64]) -> f64 {
    x[1].atan2(x[0])
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Pendulum swing-up on the (cos θ, sin θ, θ̇) embedding, θ = 0 upright.
///
/// The angle is never wrapped inside the state; the reward recovers it with
/// `atan2`. No state clipping.
pub fn pendulum_env() -> ControlledOde {
    let drift = Arc::new(|x: &[f64], u: &[f64], out: &mut [f64]| {
        let (c, s, omega) = (x[0], x[1], x[2]);
        let r = c.hypot(s);
        let sin_theta = if r > 0.0 { s / r } else { 0.0 };
        out[0] = -s * omega;
        out[1] = c * omega;
        out[2] = 3.0 * GRAVITY / (2.0 * PENDULUM_LENGTH) * sin_theta
            + 3.0 / (PENDULUM_MASS * PENDULUM_LENGTH * PENDULUM_LENGTH) * u[0];
    });
    let reward = Arc::new(|x: &[f64], u: &[f64]| {
        let theta = pendulum_angle(x);
        -theta * theta - 0.1 * x[2] * x[2] - 0.02 * u[0] * u[0]
    });
    ControlledOde::new("pendulum-gp", 3, 1, drift, reward)
        .with_horizon(2.5)
        .with_initial_state(vec![-1.0, 0.0, 0.0])
        .with_state_bounds(vec![
            Interval::new(-1.0, 1.0),
            Interval::new(-1.0, 1.0),
            Interval::UNBOUNDED,
        ])
        .with_action_bounds(vec![Interval::new(-2.0, 2.0)])
        .with_scales(vec![1.0, 1.0, 6.0], vec![4.0, 4.0, 15.0])
}

/// Continuous mountain car with position/velocity clipping and the left wall.
pub fn mountaincar_env() -> ControlledOde {
    let drift = Arc::new(|x: &[f64], u: &[f64], out: &mut [f64]| {
        out[0] = x[1];
        out[1] = 0.0015 * u[0] - 0.0025 * (3.0 * x[0]).cos();
    });
    let reward = Arc::new(|x: &[f64], u: &[f64]| {
        let bonus = if x[0] >= MOUNTAINCAR_GOAL_POSITION && x[1] >= 0.0 {
            100.0
        } else {
            0.0
        };
        -0.1 * u[0] * u[0] + bonus
    });
    let constraint = Arc::new(|x: &mut [f64]| {
        x[0] = x[0].clamp(-1.2, 0.6);
        x[1] = x[1].clamp(-0.07, 0.07);
        if x[0] <= -1.2 && x[1] < 0.0 {
            x[1] = 0.0;
        }
    });
    ControlledOde::new("mountaincar-gp", 2, 1, drift, reward)
        .with_horizon(200.0)
        .with_initial_state(vec![-0.5, 0.0])
        .with_state_bounds(vec![Interval::new(-1.2, 0.6), Interval::new(-0.07, 0.07)])
        .with_action_bounds(vec![Interval::new(-1.0, 1.0)])
        .with_constraint(constraint)
        .with_scales(vec![0.5, 0.04], vec![0.04, 0.003])
}

pub fn env_by_name(name: &str) -> Result<ControlledOde> {
    match name {
        "pendulum-gp" | "pendulum" => Ok(pendulum_env()),
        "mountaincar-gp" | "mountaincar" => Ok(mountaincar_env()),
        other => Err(Error::Config(format!(
            "unknown environment '{other}' (expected one of {ENV_NAMES:?})"
        ))),
    }
}
