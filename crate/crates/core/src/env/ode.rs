use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `drift(x, u, out)` writes dx/dt into `out`.
pub type DriftFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Reward rate r(x, u), per second.
pub type RewardFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Projects a freshly integrated state back onto the admissible set.
pub type StateConstraint = Arc<dyn Fn(&mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval bounds out of order: [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A deterministic controlled ODE x' = f(x, u) with a reward rate, bounds,
/// a horizon and an initial state.
#[derive(Clone)]
pub struct ControlledOde {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    drift: DriftFn,
    reward: RewardFn,
    pub state_bounds: Vec<Interval>,
    pub action_bounds: Vec<Interval>,
    /// Episode length in seconds.
    pub horizon: f64,
    pub initial_state: Vec<f64>,
    constraint: Option<StateConstraint>,
    /// Characteristic magnitude of each state dimension (kernel initialisation hint).
    pub state_scale: Vec<f64>,
    /// Characteristic magnitude of each derivative dimension (kernel initialisation hint).
    pub derivative_scale: Vec<f64>,
}

impl fmt::Debug for ControlledOde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlledOde")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("action_dim", &self.action_dim)
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state)
            .field("clips", &self.constraint.is_some())
            .finish()
    }
}

impl ControlledOde {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        action_dim: usize,
        drift: DriftFn,
        reward: RewardFn,
    ) -> Self {
        ControlledOde {
            name: name.into(),
            state_dim,
            action_dim,
            drift,
            reward,
            state_bounds: vec![Interval::UNBOUNDED; state_dim],
            action_bounds: vec![Interval::new(-1.0, 1.0); action_dim],
            horizon: 1.0,
            initial_state: vec![0.0; state_dim],
            constraint: None,
            state_scale: vec![1.0; state_dim],
            derivative_scale: vec![1.0; state_dim],
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Self {
        assert_eq!(x0.len(), self.state_dim);
        self.initial_state = x0;
        self
    }

    pub fn with_state_bounds(mut self, bounds: Vec<Interval>) -> Self {
        assert_eq!(bounds.len(), self.state_dim);
        self.state_bounds = bounds;
        self
    }

    pub fn with_action_bounds(mut self, bounds: Vec<Interval>) -> Self {
        assert_eq!(bounds.len(), self.action_dim);
        self.action_bounds = bounds;
        self
    }

    pub fn with_constraint(mut self, constraint: StateConstraint) -> Self {
        self.constraint = Some(constraint);
        self
    }

    pub fn with_scales(mut self, state_scale: Vec<f64>, derivative_scale: Vec<f64>) -> Self {
        assert_eq!(state_scale.len(), self.state_dim);
        assert_eq!(derivative_scale.len(), self.state_dim);
        self.state_scale = state_scale;
        self.derivative_scale = derivative_scale;
        self
    }

    /// Same dynamics and bounds, different reward.
    pub fn with_reward(mut self, reward: RewardFn) -> Self {
        self.reward = reward;
        self
    }

    pub fn drift_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, u, out)
    }

    pub fn drift(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        (self.drift)(x, u, &mut out);
        out
    }

    pub fn reward(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.reward)(x, u)
    }

    pub fn drift_fn(&self) -> &DriftFn {
        &self.drift
    }

    pub fn reward_fn(&self) -> &RewardFn {
        &self.reward
    }

    pub fn clips(&self) -> bool {
        self.constraint.is_some()
    }

    /// Applies the declared state constraint, if any.
    pub fn constrain(&self, x: &mut [f64]) {
        if let Some(c) = &self.constraint {
            c(x)
        }
    }

    pub fn clip_action(&self, u: &mut [f64]) {
        for (v, b) in u.iter_mut().zip(&self.action_bounds) {
            *v = b.clamp(*v);
        }
    }
}

/// One classical Runge-Kutta step of x' = f(x) over `dt`, written into `out`.
pub fn rk4_step<F>(mut f: F, x: &[f64], dt: f64, out: &mut [f64])
where
    F: FnMut(&[f64], &mut [f64]),
{
    let d = x.len();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    f(x, &mut k1);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..d {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(&tmp, &mut k4);
    for i in 0..d {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Advances `x` by `dt` under zero-order-held `u`, then applies the
/// environment's state constraint.
pub fn integrate_step(ode: &ControlledOde, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Shape(format!("integration step must be positive, got {dt}")));
    }
    if x.len() != ode.state_dim || u.len() != ode.action_dim {
        return Err(Error::Shape(format!(
            "state/action of length {}/{} for an ODE of dims {}/{}",
            x.len(),
            u.len(),
            ode.state_dim,
            ode.action_dim
        )));
    }
    let mut bad: Option<(usize, f64)> = None;
    let mut next = vec![0.0; x.len()];
    rk4_step(
        |s, out| {
            ode.drift_into(s, u, out);
            if bad.is_none() {
                if let Some((i, v)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    bad = Some((i, *v));
                }
            }
        },
        x,
        dt,
        &mut next,
    );
    if let Some((dim, value)) = bad {
        return Err(Error::Integration {
            quantity: "derivative",
            dim,
            value,
        });
    }
    if let Some((dim, value)) = next.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Integration {
            quantity: "state",
            dim,
            value: *value,
        });
    }
    ode.constrain(&mut next);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> ControlledOde {
        ControlledOde::new(
            "decay",
            1,
            1,
            Arc::new(|x, _u, out| out[0] = -x[0]),
            Arc::new(|_x, _u| 0.0),
        )
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let x = integrate_step(&decay(), &[1.0], &[0.0], 0.1).unwrap();
        assert!((x[0] - 0.904_837_5).abs() < 1e-6);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn zero_drift_is_identity() {
        let ode = ControlledOde::new(
            "still",
            2,
            1,
            Arc::new(|_x, _u, out| out.fill(0.0)),
            Arc::new(|_x, _u| 0.0),
        );
        let x = integrate_step(&ode, &[0.3, -2.0], &[1.0], 0.5).unwrap();
        assert_eq!(x, vec![0.3, -2.0]);
    }

    #[test]
    fn non_finite_derivative_names_dimension() {
        let ode = ControlledOde::new(
            "blowup",
            2,
            1,
            Arc::new(|_x, _u, out| {
                out[0] = 0.0;
                out[1] = f64::NAN;
            }),
            Arc::new(|_x, _u| 0.0),
        );
        match integrate_step(&ode, &[0.0, 0.0], &[0.0], 0.1) {
            Err(Error::Integration { dim, .. }) => assert_eq!(dim, 1),
            other => panic!("expected integration error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(integrate_step(&decay(), &[1.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn rk4_error_ratio_under_step_halving() {
        let ode = decay();
        let max_err = |steps: usize| {
            let dt = 1.0 / steps as f64;
            let mut x = vec![1.0];
            let mut err = 0.0f64;
            for k in 1..=steps {
                x = integrate_step(&ode, &x, &[0.0], dt).unwrap();
                err = err.max((x[0] - (-(k as f64) * dt).exp()).abs());
            }
            err
        };
        let ratio = max_err(10) / max_err(20);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }
}
