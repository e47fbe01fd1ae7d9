use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::beta::{beta, BetaRule};
use super::hyper::{optimize_hyperparameters, HyperOptConfig};
use super::kernel::RbfKernel;
use super::posterior::GpPosterior;
use super::projection::ProjectedModel;
use crate::env::{ControlledOde, DerivativeDataset};
use crate::error::{Error, Result};
use crate::rng;

/// Vector field used to propagate candidate plans: `B × d_x` states and
/// `B × d_u` actions in, `B × d_x` derivatives out.
pub trait DriftModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn drift_batch(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Concatenates states and actions row-wise into GP inputs `z = (x, u)`.
pub fn stack_inputs(states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if states.nrows() != actions.nrows() {
        return Err(Error::Shape(format!(
            "{} states but {} actions",
            states.nrows(),
            actions.nrows()
        )));
    }
    let (b, dx, du) = (states.nrows(), states.ncols(), actions.ncols());
    let mut z = DMatrix::zeros(b, dx + du);
    z.columns_mut(0, dx).copy_from(states);
    z.columns_mut(dx, du).copy_from(actions);
    Ok(z)
}

/// The true vector field of an environment, for oracle planning.
#[derive(Debug, Clone)]
pub struct TrueDrift(pub ControlledOde);

impl DriftModel for TrueDrift {
    fn state_dim(&self) -> usize {
        self.0.state_dim
    }

    fn action_dim(&self) -> usize {
        self.0.action_dim
    }

    fn drift_batch(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (dx, du) = (self.0.state_dim, self.0.action_dim);
        if states.ncols() != dx || actions.ncols() != du || states.nrows() != actions.nrows() {
            return Err(Error::Shape("true drift batch dimensions".into()));
        }
        let mut out = DMatrix::zeros(states.nrows(), dx);
        let mut x = vec![0.0; dx];
        let mut u = vec![0.0; du];
        let mut d = vec![0.0; dx];
        for r in 0..states.nrows() {
            for c in 0..dx {
                x[c] = states[(r, c)];
            }
            for c in 0..du {
                u[c] = actions[(r, c)];
            }
            self.0.drift_into(&x, &u, &mut d);
            for c in 0..dx {
                out[(r, c)] = d[c];
            }
        }
        Ok(out)
    }
}

/// Configuration of the statistical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSettings {
    pub noise_var: f64,
    /// Initial kernel per output dimension.
    pub init_kernels: Vec<RbfKernel>,
    pub hyper: HyperOptConfig,
    pub beta_rule: BetaRule,
    pub delta: f64,
    pub rkhs_bound: f64,
    /// Plan with the RKHS-ball projection instead of the raw posterior mean.
    pub projection: bool,
}

impl GpSettings {
    /// Kernel initialisation from the environment's scale hints: signal
    /// variance from the derivative scale, lengthscales from the state scale
    /// and half the action range.
    pub fn for_env(ode: &ControlledOde, noise_std: f64) -> Self {
        let mut lengthscales = ode.state_scale.clone();
        lengthscales.extend(ode.action_bounds.iter().map(|b| 0.5 * b.width()));
        let init_kernels = ode
            .derivative_scale
            .iter()
            .map(|s| RbfKernel::new(s * s, &lengthscales))
            .collect();
        GpSettings {
            noise_var: (noise_std * noise_std).max(1e-8),
            init_kernels,
            hyper: HyperOptConfig::default(),
            beta_rule: BetaRule::Fixed { value: 1.0 },
            delta: 0.1,
            rkhs_bound: 1.0,
            projection: false,
        }
    }
}

/// Independent GP posteriors per output dimension plus the confidence scale.
#[derive(Debug, Clone)]
pub struct StatisticalModel {
    pub posteriors: Vec<GpPosterior>,
    pub beta: f64,
    pub episode: usize,
    pub rkhs_bound: f64,
    state_dim: usize,
    action_dim: usize,
}

impl StatisticalModel {
    pub fn prior(state_dim: usize, action_dim: usize, settings: &GpSettings) -> Result<Self> {
        Self::fit(
            &DerivativeDataset::new(state_dim, action_dim, settings.noise_var.sqrt()),
            &settings.init_kernels,
            settings,
            0,
        )
    }

    /// Posterior on `data` with the given kernels (no hyperparameter search).
    pub fn fit(
        data: &DerivativeDataset,
        kernels: &[RbfKernel],
        settings: &GpSettings,
        episode: usize,
    ) -> Result<Self> {
        if kernels.len() != data.state_dim {
            return Err(Error::Shape(format!(
                "{} kernels for {} output dimensions",
                kernels.len(),
                data.state_dim
            )));
        }
        let inputs = data.inputs();
        let posteriors = kernels
            .iter()
            .enumerate()
            .map(|(j, k)| GpPosterior::fit(inputs.clone(), data.targets(j), k.clone(), settings.noise_var))
            .collect::<Result<Vec<_>>>()?;
        let mut model = StatisticalModel {
            posteriors,
            beta: 0.0,
            episode,
            rkhs_bound: settings.rkhs_bound,
            state_dim: data.state_dim,
            action_dim: data.action_dim,
        };
        model.beta = beta(&settings.beta_rule, settings.delta, model.information_gain());
        Ok(model)
    }

    /// Refits hyperparameters (warm-started from `kernels`) and the posterior.
    pub fn refit(
        data: &DerivativeDataset,
        kernels: &[RbfKernel],
        settings: &GpSettings,
        episode: usize,
    ) -> Result<Self> {
        let fitted = if data.is_empty() {
            kernels.to_vec()
        } else {
            let inputs = data.inputs();
            kernels
                .iter()
                .enumerate()
                .map(|(j, k)| {
                    optimize_hyperparameters(&inputs, &data.targets(j), k, settings.noise_var, &settings.hyper)
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::fit(data, &fitted, settings, episode)
    }

    pub(crate) fn from_parts(
        posteriors: Vec<GpPosterior>,
        beta: f64,
        episode: usize,
        rkhs_bound: f64,
        state_dim: usize,
        action_dim: usize,
    ) -> Self {
        StatisticalModel {
            posteriors,
            beta,
            episode,
            rkhs_bound,
            state_dim,
            action_dim,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn len(&self) -> usize {
        self.posteriors[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors[0].is_empty()
    }

    pub fn kernels(&self) -> Vec<RbfKernel> {
        self.posteriors.iter().map(|p| p.kernel().clone()).collect()
    }

    /// Largest per-dimension `½ log det(I + K/σ²)`.
    pub fn information_gain(&self) -> f64 {
        self.posteriors
            .iter()
            .map(|p| p.information_gain())
            .fold(0.0, f64::max)
    }

    /// Posterior means `B × d_x` at input rows `z = (x, u)`.
    pub fn mean_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(inputs.nrows(), self.state_dim);
        for (j, p) in self.posteriors.iter().enumerate() {
            out.set_column(j, &p.mean_batch(inputs)?);
        }
        Ok(out)
    }

    /// Posterior means and standard deviations, both `B × d_x`.
    pub fn predict_batch(&self, inputs: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let b = inputs.nrows();
        let mut mean = DMatrix::zeros(b, self.state_dim);
        let mut std = DMatrix::zeros(b, self.state_dim);
        for (j, p) in self.posteriors.iter().enumerate() {
            let (m, v) = p.predict_batch(inputs)?;
            mean.set_column(j, &m);
            std.set_column(j, &v.map(f64::sqrt));
        }
        Ok((mean, std))
    }

    pub fn std_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let b = inputs.nrows();
        let mut std = DMatrix::zeros(b, self.state_dim);
        for (j, p) in self.posteriors.iter().enumerate() {
            let v = if p.is_empty() {
                if inputs.ncols() != p.input_dim() {
                    return Err(Error::Shape("query width".into()));
                }
                DVector::from_element(b, p.kernel().signal_var())
            } else {
                p.variance_from_cross(&p.cross_kernel(inputs)?)
            };
            std.set_column(j, &v.map(f64::sqrt));
        }
        Ok(std)
    }

    /// `‖σ(z)‖₂` per input row.
    pub fn std_norm_batch(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        let std = self.std_batch(inputs)?;
        Ok(DVector::from_fn(std.nrows(), |r, _| std.row(r).norm()))
    }

    pub fn mean(&self, z: &[f64]) -> Result<Vec<f64>> {
        let m = self.mean_batch(&DMatrix::from_row_slice(1, z.len(), z))?;
        Ok(m.iter().copied().collect())
    }

    pub fn std(&self, z: &[f64]) -> Result<Vec<f64>> {
        let s = self.std_batch(&DMatrix::from_row_slice(1, z.len(), z))?;
        Ok(s.iter().copied().collect())
    }

    /// One joint posterior draw of f at the input rows, `B × d_x`.
    pub fn sample_function_values(&self, inputs: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(inputs.nrows(), self.state_dim);
        for (j, p) in self.posteriors.iter().enumerate() {
            let mut rng = rng::stream(seed, &[j as u64]);
            out.set_column(j, &p.sample_joint(inputs, &mut rng)?);
        }
        Ok(out)
    }
}

impl DriftModel for StatisticalModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn drift_batch(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.mean_batch(&stack_inputs(states, actions)?)
    }
}

impl DriftModel for ProjectedModel {
    fn state_dim(&self) -> usize {
        self.output_dim()
    }

    fn action_dim(&self) -> usize {
        self.input_dim() - self.output_dim()
    }

    fn drift_batch(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.mean_batch(&stack_inputs(states, actions)?)
    }
}
