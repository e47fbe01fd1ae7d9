use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kernel::RbfKernel;
use super::model::StatisticalModel;
use super::posterior::GpPosterior;
use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Serialisable state of a fitted [`StatisticalModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub schema_version: u32,
    pub env: String,
    pub episode: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub beta: f64,
    pub rkhs_bound: f64,
    pub noise_var: f64,
    pub kernels: Vec<RbfKernel>,
    /// Hex SHA-256 of the training inputs and targets.
    pub training_digest: String,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// `(K + σ²I)⁻¹ y` per output dimension.
    pub alpha: Vec<Vec<f64>>,
}

fn digest(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    for z in inputs {
        for v in z {
            h.update(v.to_le_bytes());
        }
    }
    for t in targets {
        for v in t {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl ModelSnapshot {
    pub fn capture(model: &StatisticalModel, env: &str) -> Self {
        let inputs = model.posteriors[0].inputs().to_vec();
        let targets: Vec<Vec<f64>> = model
            .posteriors
            .iter()
            .map(|p| p.targets().iter().copied().collect())
            .collect();
        ModelSnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            env: env.to_string(),
            episode: model.episode,
            state_dim: model.state_dim(),
            action_dim: model.action_dim(),
            beta: model.beta,
            rkhs_bound: model.rkhs_bound,
            noise_var: model.posteriors[0].noise_var(),
            kernels: model.kernels(),
            training_digest: digest(&inputs, &targets),
            alpha: model
                .posteriors
                .iter()
                .map(|p| p.alpha().iter().copied().collect())
                .collect(),
            inputs,
            targets,
        }
    }

    /// Rebuilds the model, checking the schema version, the data digest and
    /// the stored weights.
    pub fn restore(&self) -> Result<StatisticalModel> {
        if self.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported schema version {} (expected {SNAPSHOT_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if digest(&self.inputs, &self.targets) != self.training_digest {
            return Err(Error::Snapshot("training data does not match its digest".into()));
        }
        if self.kernels.len() != self.state_dim || self.targets.len() != self.state_dim {
            return Err(Error::Snapshot("per-dimension arrays disagree with state_dim".into()));
        }
        let posteriors = self
            .kernels
            .iter()
            .zip(&self.targets)
            .map(|(k, y)| GpPosterior::fit(self.inputs.clone(), y.clone(), k.clone(), self.noise_var))
            .collect::<Result<Vec<_>>>()?;
        for (p, stored) in posteriors.iter().zip(&self.alpha) {
            let scale = stored.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let drift = p
                .alpha()
                .iter()
                .zip(stored)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if stored.len() != p.len() || drift > 1e-6 * scale {
                return Err(Error::Snapshot(format!(
                    "refitted weights deviate from the snapshot by {drift:.3e}"
                )));
            }
        }
        Ok(StatisticalModel::from_parts(
            posteriors,
            self.beta,
            self.episode,
            self.rkhs_bound,
            self.state_dim,
            self.action_dim,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{observe, pendulum_env, rollout, DerivativeDataset, EquidistantMss, OpenLoop};
    use crate::gp::GpSettings;

    fn model() -> StatisticalModel {
        let env = pendulum_env();
        let traj = rollout(&env, &mut OpenLoop(vec![vec![1.5]]), 20.0).unwrap();
        let mut data = DerivativeDataset::new(3, 1, 0.01);
        data.extend(observe(&traj, &EquidistantMss::new(20, 2.5), &env, 0.01, 1, 0).unwrap());
        let s = GpSettings::for_env(&env, 0.01);
        StatisticalModel::fit(&data, &s.init_kernels, &s, 1).unwrap()
    }

    #[test]
    fn json_round_trip_restores_predictions() {
        let m = model();
        let snap = ModelSnapshot::capture(&m, "pendulum-gp");
        let text = serde_json::to_string(&snap).unwrap();
        let back: ModelSnapshot = serde_json::from_str(&text).unwrap();
        let r = back.restore().unwrap();
        let z = [0.1, -0.99, 0.5, 1.0];
        assert_eq!(m.mean(&z).unwrap(), r.mean(&z).unwrap());
        assert_eq!(r.beta, m.beta);
    }

    #[test]
    fn tampered_data_is_rejected() {
        let mut snap = ModelSnapshot::capture(&model(), "pendulum-gp");
        snap.targets[0][0] += 1.0;
        assert!(matches!(snap.restore(), Err(Error::Snapshot(_))));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut snap = ModelSnapshot::capture(&model(), "pendulum-gp");
        snap.schema_version = 99;
        assert!(snap.restore().is_err());
    }
}
