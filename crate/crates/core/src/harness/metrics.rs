use nalgebra::DMatrix;

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::gp::StatisticalModel;

/// Signed per-episode gaps `J* − J_n` and their running sums.
pub fn regret_metrics(returns: &[f64], oracle: f64) -> (Vec<f64>, Vec<f64>) {
    let gaps: Vec<f64> = returns.iter().map(|j| oracle - j).collect();
    let cumulative = gaps
        .iter()
        .scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        })
        .collect();
    (gaps, cumulative)
}

/// Left-endpoint quadratures of `‖σ(x, u)‖` and `‖σ(x, u)‖²` along the
/// executed control steps.
pub fn uncertainty_integral(model: &StatisticalModel, traj: &Trajectory) -> Result<(f64, f64)> {
    if traj.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (dx, du) = (model.state_dim(), model.action_dim());
    if traj.states[0].len() != dx || traj.actions[0].len() != du {
        return Err(Error::Shape(format!(
            "trajectory of dims {}/{} for a model of dims {dx}/{du}",
            traj.states[0].len(),
            traj.actions[0].len()
        )));
    }
    let z = DMatrix::from_fn(traj.len(), dx + du, |r, c| {
        if c < dx {
            traj.states[r][c]
        } else {
            traj.actions[r][c - dx]
        }
    });
    let norms = model.std_norm_batch(&z)?;
    let dt = 1.0 / traj.control_freq;
    let linear = norms.iter().sum::<f64>() * dt;
    let squared = norms.iter().map(|s| s * s).sum::<f64>() * dt;
    Ok((linear, squared))
}

/// Mean and standard error (sample stddev / √n, zero for one value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
