use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ode::{integrate_step, ControlledOde};
use super::trajectory::{Trajectory, INTEGRATION_SUBSTEPS};
use crate::error::{Error, Result};
use crate::rng;

/// `m` measurement times spaced `T/m` apart on `[0, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquidistantMss {
    pub measurement_count: usize,
    pub horizon: f64,
}

impl EquidistantMss {
    pub fn new(measurement_count: usize, horizon: f64) -> Self {
        EquidistantMss {
            measurement_count,
            horizon,
        }
    }

    pub fn timestamps(&self) -> Vec<f64> {
        let m = self.measurement_count as f64;
        (0..self.measurement_count)
            .map(|i| i as f64 * self.horizon / m)
            .collect()
    }
}

/// One noisy derivative observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub episode: usize,
    pub t: f64,
    /// State-action input `(x, u)`.
    pub z: Vec<f64>,
    /// Observed `ẋ + ε`.
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeDataset {
    pub state_dim: usize,
    pub action_dim: usize,
    pub noise_std: f64,
    pub records: Vec<Record>,
}

impl DerivativeDataset {
    pub fn new(state_dim: usize, action_dim: usize, noise_std: f64) -> Self {
        DerivativeDataset {
            state_dim,
            action_dim,
            noise_std,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = Record>) {
        self.records.extend(records);
    }

    pub fn count_for_episode(&self, episode: usize) -> usize {
        self.records.iter().filter(|r| r.episode == episode).count()
    }

    /// Row-major `n × (d_x + d_u)` inputs.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.z.clone()).collect()
    }

    /// Targets of output dimension `j`.
    pub fn targets(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.y[j]).collect()
    }
}

/// Measures the noisy derivative along `traj` at every MSS time.
///
/// Times between control steps are reached by integrating forward from the
/// preceding control-step state under its held action.
pub fn observe(
    traj: &Trajectory,
    mss: &EquidistantMss,
    ode: &ControlledOde,
    noise_std: f64,
    episode: usize,
    seed: u64,
) -> Result<Vec<Record>> {
    if traj.is_empty() {
        return Err(Error::Shape("cannot observe an empty trajectory".into()));
    }
    let freq = traj.control_freq;
    let horizon = traj.len() as f64 / freq;
    let mut rng = rng::stream(seed, &[episode as u64]);
    let mut out = Vec::with_capacity(mss.measurement_count);
    for t in mss.timestamps() {
        if t < 0.0 || t > horizon {
            return Err(Error::Shape(format!(
                "measurement time {t} outside trajectory support [0, {horizon}]"
            )));
        }
        let k = ((t * freq + 1e-9).floor() as usize).min(traj.len() - 1);
        let u = &traj.actions[k];
        let offset = t - traj.timestamps[k];
        let x = if offset > 1e-12 {
            let substeps = ((offset * freq * INTEGRATION_SUBSTEPS as f64).ceil() as usize).max(1);
            let dt = offset / substeps as f64;
            let mut x = traj.states[k].clone();
            for _ in 0..substeps {
                x = integrate_step(ode, &x, u, dt)?;
            }
            x
        } else {
            traj.states[k].clone()
        };
        let mut y = ode.drift(&x, u);
        if noise_std > 0.0 {
            for v in y.iter_mut() {
                let eps: f64 = StandardNormal.sample(&mut rng);
                *v += noise_std * eps;
            }
        }
        let mut z = x;
        z.extend_from_slice(u);
        out.push(Record { episode, t, z, y });
    }
    Ok(out)
}
