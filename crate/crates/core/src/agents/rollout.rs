//! Batched RK4 rollouts of candidate plans through a drift model.

use nalgebra::{DMatrix, DVector};

use crate::env::ControlledOde;
use crate::error::{Error, Result};

/// Per-control-step dynamics for a batch of rows.
pub(crate) trait StepDynamics {
    /// Drift at the left endpoint of control step `k`, plus the uncertainty
    /// bonus `‖σ‖` per row when the objective needs it.
    fn left(&mut self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<DVector<f64>>)>;

    /// Drift at an intermediate RK4 stage within control step `k`.
    fn stage(&mut self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

pub(crate) struct BatchRollout<'a> {
    pub ode: &'a ControlledOde,
    pub x0: &'a [f64],
    pub freq: f64,
    pub substeps: usize,
    pub horizon: usize,
}

impl BatchRollout<'_> {
    /// Integrates every row and returns the left-endpoint quadrature of
    /// `rate(r, bonus)` per row; rows that blow up score NaN.
    ///
    /// `actions(k)` gives the `R × d_u` actions held during step `k`.
    pub fn run(
        &self,
        rows: usize,
        dynamics: &mut dyn StepDynamics,
        actions: &dyn Fn(usize) -> DMatrix<f64>,
        rate: &dyn Fn(f64, Option<f64>) -> f64,
    ) -> Result<DVector<f64>> {
        let dx = self.ode.state_dim;
        if self.x0.len() != dx {
            return Err(Error::Shape(format!("initial state of length {} for {dx} states", self.x0.len())));
        }
        let dt = 1.0 / self.freq;
        let h = dt / self.substeps.max(1) as f64;
        let mut x = DMatrix::from_fn(rows, dx, |_, c| self.x0[c]);
        let mut total = DVector::<f64>::zeros(rows);
        let mut dead = vec![false; rows];
        let mut xr = vec![0.0; dx];
        let mut ur = vec![0.0; self.ode.action_dim];

        for k in 0..self.horizon {
            let u = actions(k);
            let (f1, bonus) = dynamics.left(k, &x, &u)?;
            for r in 0..rows {
                if dead[r] {
                    continue;
                }
                for c in 0..dx {
                    xr[c] = x[(r, c)];
                }
                for c in 0..ur.len() {
                    ur[c] = u[(r, c)];
                }
                let reward = self.ode.reward(&xr, &ur);
                total[r] += rate(reward, bonus.as_ref().map(|b| b[r])) * dt;
            }
            let mut first = Some(f1);
            for _ in 0..self.substeps.max(1) {
                let k1 = match first.take() {
                    Some(f) => f,
                    None => dynamics.stage(k, &x, &u)?,
                };
                let k2 = dynamics.stage(k, &(&x + &k1 * (0.5 * h)), &u)?;
                let k3 = dynamics.stage(k, &(&x + &k2 * (0.5 * h)), &u)?;
                let k4 = dynamics.stage(k, &(&x + &k3 * h), &u)?;
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                for r in 0..rows {
                    for c in 0..dx {
                        xr[c] = x[(r, c)];
                    }
                    if xr.iter().all(|v| v.is_finite()) {
                        self.ode.constrain(&mut xr);
                    } else {
                        dead[r] = true;
                        xr.copy_from_slice(self.x0);
                    }
                    for c in 0..dx {
                        x[(r, c)] = xr[c];
                    }
                }
            }
        }
        for (r, d) in dead.iter().enumerate() {
            if *d || !total[r].is_finite() {
                total[r] = f64::NAN;
            }
        }
        Ok(total)
    }
}
