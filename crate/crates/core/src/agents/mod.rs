//! Planning agents: the optimistic blended-objective agent and its baselines.
//!
//! Every agent scores candidate plans by rolling them through a model with
//! batched RK4 and integrating a running reward:
//!
//! * `combrl`: posterior mean dynamics, reward `(r + λ‖σ‖)/(1 + λ)`.
//! * `mean`: posterior mean dynamics, extrinsic reward only.
//! * `pets`: TS-1 particles, drift `μ + σ ⊙ ε` with fresh `ε` each step.
//! * `ocorl`: hallucinated inputs `η ∈ [-1, 1]^{d_x}`, drift `μ + βσ ⊙ η`.

mod rollout;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{ControlledOde, Interval};
use crate::error::{Error, Result};
use crate::gp::{stack_inputs, DriftModel, StatisticalModel};
use crate::objective::ObjectiveSpec;
use crate::planner::CandidateEvaluator;
use crate::rng;
use rollout::{BatchRollout, StepDynamics};

pub const AGENT_NAMES: [&str; 4] = ["combrl", "mean", "pets", "ocorl"];

fn default_particles() -> usize {
    10
}

fn default_ocorl_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "lowercase", deny_unknown_fields)]
pub enum AgentKind {
    Combrl,
    Mean,
    Pets {
        #[serde(default = "default_particles")]
        particles: usize,
    },
    Ocorl {
        #[serde(default = "default_ocorl_beta")]
        beta: f64,
    },
}

impl AgentKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "combrl" => Ok(AgentKind::Combrl),
            "mean" => Ok(AgentKind::Mean),
            "pets" => Ok(AgentKind::Pets {
                particles: default_particles(),
            }),
            "ocorl" => Ok(AgentKind::Ocorl {
                beta: default_ocorl_beta(),
            }),
            other => Err(Error::Config(format!(
                "unknown agent '{other}' (expected one of {AGENT_NAMES:?})"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Combrl => "combrl",
            AgentKind::Mean => "mean",
            AgentKind::Pets { .. } => "pets",
            AgentKind::Ocorl { .. } => "ocorl",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AgentKind::Pets { particles: 0 } => Err(Error::Config("pets needs at least one particle".into())),
            AgentKind::Ocorl { beta } if !(*beta >= 0.0) => {
                Err(Error::Config(format!("ocorl beta must be non-negative, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the blended intrinsic objective applies; the baselines are greedy.
    pub fn uses_intrinsic_reward(&self) -> bool {
        matches!(self, AgentKind::Combrl)
    }

    /// Dimension of the planner's search space per step.
    pub fn plan_dim(&self, ode: &ControlledOde) -> usize {
        match self {
            AgentKind::Ocorl { .. } => ode.action_dim + ode.state_dim,
            _ => ode.action_dim,
        }
    }

    pub fn plan_bounds(&self, ode: &ControlledOde) -> Vec<Interval> {
        let mut b = ode.action_bounds.clone();
        if let AgentKind::Ocorl { .. } = self {
            b.extend(std::iter::repeat(Interval::new(-1.0, 1.0)).take(ode.state_dim));
        }
        b
    }
}

/// The model an agent plans with: `σ` always comes from the statistical
/// model (zero without one); `μ` comes from `mean_override` when set.
#[derive(Clone, Copy)]
pub struct ModelView<'a> {
    pub model: Option<&'a StatisticalModel>,
    pub mean_override: Option<&'a dyn DriftModel>,
}

impl<'a> ModelView<'a> {
    pub fn gp(model: &'a StatisticalModel) -> Self {
        ModelView {
            model: Some(model),
            mean_override: None,
        }
    }

    /// Deterministic dynamics with no uncertainty.
    pub fn deterministic(drift: &'a dyn DriftModel) -> Self {
        ModelView {
            model: None,
            mean_override: Some(drift),
        }
    }

    pub fn with_mean(mut self, drift: &'a dyn DriftModel) -> Self {
        self.mean_override = Some(drift);
        self
    }

    fn mean(&self, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match (self.mean_override, self.model) {
            (Some(d), _) => d.drift_batch(x, u),
            (None, Some(m)) => m.mean_batch(&stack_inputs(x, u)?),
            (None, None) => Err(Error::Config("planning needs a model".into())),
        }
    }

    fn mean_std(&self, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match (self.mean_override, self.model) {
            (None, Some(m)) => m.predict_batch(&stack_inputs(x, u)?),
            (Some(d), Some(m)) => Ok((d.drift_batch(x, u)?, m.std_batch(&stack_inputs(x, u)?)?)),
            (Some(d), None) => {
                let mean = d.drift_batch(x, u)?;
                let std = DMatrix::zeros(mean.nrows(), mean.ncols());
                Ok((mean, std))
            }
            (None, None) => Err(Error::Config("planning needs a model".into())),
        }
    }
}

fn row_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |r, _| m.row(r).norm())
}

struct MeanDynamics<'a> {
    view: ModelView<'a>,
    bonus: bool,
}

impl StepDynamics for MeanDynamics<'_> {
    fn left(&mut self, _k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
        if self.bonus {
            let (m, s) = self.view.mean_std(x, u)?;
            Ok((m, Some(row_norms(&s))))
        } else {
            Ok((self.view.mean(x, u)?, None))
        }
    }

    fn stage(&mut self, _k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.view.mean(x, u)
    }
}

/// TS-1 particles; `eps[((row * horizon) + k) * d_x + j]` is the standard
/// normal draw for `row` during control step `k`, shared by its RK4 stages.
struct PetsDynamics<'a> {
    view: ModelView<'a>,
    eps: Vec<f64>,
    horizon: usize,
}

impl PetsDynamics<'_> {
    fn perturbed(&self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (mut m, s) = self.view.mean_std(x, u)?;
        let dx = m.ncols();
        for r in 0..m.nrows() {
            let base = (r * self.horizon + k) * dx;
            for j in 0..dx {
                m[(r, j)] += s[(r, j)] * self.eps[base + j];
            }
        }
        Ok(m)
    }
}

impl StepDynamics for PetsDynamics<'_> {
    fn left(&mut self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
        Ok((self.perturbed(k, x, u)?, None))
    }

    fn stage(&mut self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.perturbed(k, x, u)
    }
}

/// Hallucinated control: `eta[k]` is `R × d_x` in `[-1, 1]`.
struct OcorlDynamics<'a> {
    view: ModelView<'a>,
    beta: f64,
    eta: Vec<DMatrix<f64>>,
}

impl OcorlDynamics<'_> {
    fn optimistic(&self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.beta == 0.0 {
            return self.view.mean(x, u);
        }
        let (m, s) = self.view.mean_std(x, u)?;
        Ok(m + (s.component_mul(&self.eta[k])) * self.beta)
    }
}

impl StepDynamics for OcorlDynamics<'_> {
    fn left(&mut self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
        Ok((self.optimistic(k, x, u)?, None))
    }

    fn stage(&mut self, k: usize, x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.optimistic(k, x, u)
    }
}

/// What a planning call optimises over: start state, horizon and the
/// integration settings of model rollouts.
#[derive(Clone)]
pub struct PlanningProblem<'a> {
    pub ode: &'a ControlledOde,
    pub x0: Vec<f64>,
    pub freq: f64,
    /// RK4 steps per control step in model rollouts.
    pub substeps: usize,
    pub horizon: usize,
}

impl PlanningProblem<'_> {
    fn rollout(&self) -> BatchRollout<'_> {
        BatchRollout {
            ode: self.ode,
            x0: &self.x0,
            freq: self.freq,
            substeps: self.substeps,
            horizon: self.horizon,
        }
    }
}

/// Scores iCEM candidates for one agent; see the module docs for the
/// per-agent dynamics and rewards.
pub struct AgentEvaluator<'a> {
    pub problem: PlanningProblem<'a>,
    pub agent: AgentKind,
    pub objective: ObjectiveSpec,
    pub view: ModelView<'a>,
}

impl AgentEvaluator<'_> {
    fn check(&self, candidates: &[Vec<f64>]) -> Result<usize> {
        let pd = self.agent.plan_dim(self.problem.ode);
        let len = self.problem.horizon * pd;
        if let Some(c) = candidates.iter().find(|c| c.len() != len) {
            return Err(Error::Shape(format!(
                "candidate of length {} for a {} × {pd} plan",
                c.len(),
                self.problem.horizon
            )));
        }
        Ok(pd)
    }
}

impl CandidateEvaluator for AgentEvaluator<'_> {
    fn evaluate(&self, candidates: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
        let pd = self.check(candidates)?;
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let ode = self.problem.ode;
        let (du, dx, h) = (ode.action_dim, ode.state_dim, self.problem.horizon);
        let b = candidates.len();
        let rollout = self.problem.rollout();
        match &self.agent {
            AgentKind::Combrl | AgentKind::Mean => {
                let spec = if self.agent.uses_intrinsic_reward() {
                    self.objective.clone()
                } else {
                    ObjectiveSpec::greedy()
                };
                let bonus = !spec.is_greedy();
                let actions = |k: usize| DMatrix::from_fn(b, du, |r, c| candidates[r][k * pd + c]);
                let rate = |r: f64, s: Option<f64>| match s {
                    Some(s) => spec.blend(r, s),
                    None => r,
                };
                let mut dynamics = MeanDynamics { view: self.view, bonus };
                let v = rollout.run(b, &mut dynamics, &actions, &rate)?;
                Ok(v.iter().copied().collect())
            }
            AgentKind::Pets { particles } => {
                let p = *particles;
                let per = p * h * dx;
                let mut eps = vec![0.0; b * per];
                for (i, chunk) in eps.chunks_mut(per).enumerate() {
                    let mut rng = rng::stream(seed, &[i as u64]);
                    for e in chunk.iter_mut() {
                        *e = rng.sample(StandardNormal);
                    }
                }
                let actions = |k: usize| DMatrix::from_fn(b * p, du, |r, c| candidates[r / p][k * pd + c]);
                let rate = |r: f64, _: Option<f64>| r;
                let mut dynamics = PetsDynamics {
                    view: self.view,
                    eps,
                    horizon: h,
                };
                let v = rollout.run(b * p, &mut dynamics, &actions, &rate)?;
                Ok((0..b)
                    .map(|i| v.rows(i * p, p).sum() / p as f64)
                    .collect())
            }
            AgentKind::Ocorl { beta } => {
                let eta = (0..h)
                    .map(|k| DMatrix::from_fn(b, dx, |r, j| candidates[r][k * pd + du + j].clamp(-1.0, 1.0)))
                    .collect();
                let actions = |k: usize| DMatrix::from_fn(b, du, |r, c| candidates[r][k * pd + c]);
                let rate = |r: f64, _: Option<f64>| r;
                let mut dynamics = OcorlDynamics {
                    view: self.view,
                    beta: *beta,
                    eta,
                };
                let v = rollout.run(b, &mut dynamics, &actions, &rate)?;
                Ok(v.iter().copied().collect())
            }
        }
    }
}

fn flatten(plan: &[Vec<f64>]) -> Vec<f64> {
    plan.concat()
}

fn score(
    problem: &PlanningProblem<'_>,
    agent: AgentKind,
    objective: ObjectiveSpec,
    view: ModelView<'_>,
    plan: &[Vec<f64>],
    seed: u64,
) -> Result<f64> {
    let mut problem = problem.clone();
    problem.horizon = plan.len();
    let eval = AgentEvaluator {
        problem,
        agent,
        objective,
        view,
    };
    Ok(eval.evaluate(&[flatten(plan)], seed)?[0])
}

/// Extrinsic return of `plan` under the mean dynamics.
pub fn mean_agent_objective(view: ModelView<'_>, problem: &PlanningProblem<'_>, plan: &[Vec<f64>]) -> Result<f64> {
    score(problem, AgentKind::Mean, ObjectiveSpec::greedy(), view, plan, 0)
}

/// Blended return of `plan` under the mean dynamics.
pub fn combrl_objective(
    view: ModelView<'_>,
    problem: &PlanningProblem<'_>,
    spec: &ObjectiveSpec,
    plan: &[Vec<f64>],
) -> Result<f64> {
    score(problem, AgentKind::Combrl, spec.clone(), view, plan, 0)
}

/// Mean extrinsic return over `particles` TS-1 particles.
pub fn pets_ts1_objective(
    view: ModelView<'_>,
    problem: &PlanningProblem<'_>,
    plan: &[Vec<f64>],
    particles: usize,
    seed: u64,
) -> Result<f64> {
    let agent = AgentKind::Pets { particles };
    agent.validate()?;
    score(problem, agent, ObjectiveSpec::greedy(), view, plan, seed)
}

/// Extrinsic return under the hallucinated dynamics `μ + βσ ⊙ η`; each plan
/// step is `(u, η)`. Out-of-range `η` entries are clipped.
pub fn ocorl_objective(
    view: ModelView<'_>,
    problem: &PlanningProblem<'_>,
    extended_plan: &[Vec<f64>],
    beta: f64,
) -> Result<f64> {
    let clipped = extended_plan
        .iter()
        .flat_map(|s| s.iter().skip(problem.ode.action_dim))
        .filter(|v| v.abs() > 1.0)
        .count();
    if clipped > 0 {
        log::debug!("ocorl: clipped {clipped} hallucinated inputs into [-1, 1]");
    }
    let agent = AgentKind::Ocorl { beta };
    agent.validate()?;
    score(problem, agent, ObjectiveSpec::greedy(), view, extended_plan, 0)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::env::{observe, pendulum_env, rollout, DerivativeDataset, EquidistantMss, OpenLoop};
    use crate::gp::{GpSettings, TrueDrift};
    use crate::objective::Regime;

    fn plan(h: usize) -> Vec<Vec<f64>> {
        (0..h).map(|k| vec![1.8 * ((k as f64) * 0.7).sin()]).collect()
    }

    fn fitted(ode: &ControlledOde) -> StatisticalModel {
        let traj = rollout(ode, &mut OpenLoop(plan(50)), 20.0).unwrap();
        let mut data = DerivativeDataset::new(3, 1, 0.01);
        data.extend(observe(&traj, &EquidistantMss::new(25, 2.5), ode, 0.01, 1, 3).unwrap());
        let settings = GpSettings::for_env(ode, 0.01);
        StatisticalModel::fit(&data, &settings.init_kernels, &settings, 1).unwrap()
    }

    fn problem(ode: &ControlledOde, h: usize) -> PlanningProblem<'_> {
        PlanningProblem {
            ode,
            x0: ode.initial_state.clone(),
            freq: 20.0,
            substeps: 1,
            horizon: h,
        }
    }

    #[test]
    fn mean_equals_greedy_combrl() {
        let ode = pendulum_env();
        let model = fitted(&ode);
        let p = problem(&ode, 15);
        let view = ModelView::gp(&model);
        let a = mean_agent_objective(view, &p, &plan(15)).unwrap();
        let b = combrl_objective(view, &p, &ObjectiveSpec::greedy(), &plan(15)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_reward_gives_zero() {
        let ode = pendulum_env().with_reward(Arc::new(|_x, _u| 0.0));
        let model = fitted(&ode);
        let v = mean_agent_objective(ModelView::gp(&model), &problem(&ode, 10), &plan(10)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn upright_rest_under_true_dynamics_scores_zero() {
        let ode = pendulum_env();
        let truth = TrueDrift(ode.clone());
        let mut p = problem(&ode, 20);
        p.x0 = vec![1.0, 0.0, 0.0];
        let v = mean_agent_objective(ModelView::deterministic(&truth), &p, &vec![vec![0.0]; 20]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn unsupervised_prior_integrates_prior_std() {
        let ode = pendulum_env();
        let settings = GpSettings::for_env(&ode, 0.01);
        let prior = StatisticalModel::prior(3, 1, &settings).unwrap();
        let spec = ObjectiveSpec::new(Regime::Unsupervised).unwrap();
        let v = combrl_objective(ModelView::gp(&prior), &problem(&ode, 10), &spec, &plan(10)).unwrap();
        let expected = (16.0f64 + 16.0 + 225.0).sqrt() * 10.0 / 20.0;
        assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
    }

    #[test]
    fn pets_without_variance_matches_mean() {
        let ode = pendulum_env();
        let truth = TrueDrift(ode.clone());
        let view = ModelView::deterministic(&truth);
        let p = problem(&ode, 12);
        let m = mean_agent_objective(view, &p, &plan(12)).unwrap();
        let one = pets_ts1_objective(view, &p, &plan(12), 1, 4).unwrap();
        let ten = pets_ts1_objective(view, &p, &plan(12), 10, 4).unwrap();
        assert_eq!(m, one);
        assert!((one - ten).abs() <= 1e-12 * m.abs());
    }

    #[test]
    fn pets_is_seeded() {
        let ode = pendulum_env();
        let model = fitted(&ode);
        let view = ModelView::gp(&model);
        let p = problem(&ode, 12);
        let a = pets_ts1_objective(view, &p, &plan(12), 5, 9).unwrap();
        let b = pets_ts1_objective(view, &p, &plan(12), 5, 9).unwrap();
        let c = pets_ts1_objective(view, &p, &plan(12), 5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ocorl_without_hallucination_matches_mean() {
        let ode = pendulum_env();
        let model = fitted(&ode);
        let view = ModelView::gp(&model);
        let p = problem(&ode, 12);
        let m = mean_agent_objective(view, &p, &plan(12)).unwrap();
        let ext: Vec<Vec<f64>> = plan(12).into_iter().map(|u| vec![u[0], 0.0, 0.0, 0.0]).collect();
        let o = ocorl_objective(view, &p, &ext, 7.5).unwrap();
        assert!((m - o).abs() <= 1e-12 * m.abs().max(1.0));
    }

    #[test]
    fn ocorl_with_zero_beta_ignores_eta() {
        let ode = pendulum_env();
        let model = fitted(&ode);
        let view = ModelView::gp(&model);
        let p = problem(&ode, 12);
        let a: Vec<Vec<f64>> = plan(12).into_iter().map(|u| vec![u[0], 1.0, -1.0, 0.5]).collect();
        let b: Vec<Vec<f64>> = plan(12).into_iter().map(|u| vec![u[0], -0.3, 0.2, -1.0]).collect();
        assert_eq!(ocorl_objective(view, &p, &a, 0.0).unwrap(), ocorl_objective(view, &p, &b, 0.0).unwrap());
    }

    #[test]
    fn ocorl_plans_in_extended_space() {
        let ode = pendulum_env();
        let agent = AgentKind::Ocorl { beta: 7.5 };
        assert_eq!(agent.plan_dim(&ode), 4);
        assert_eq!(agent.plan_bounds(&ode)[3], Interval::new(-1.0, 1.0));
        assert_eq!(AgentKind::Combrl.plan_dim(&ode), 1);
    }

    #[test]
    fn optimism_dominates_mean() {
        let ode = pendulum_env();
        let model = fitted(&ode);
        let view = ModelView::gp(&model);
        let p = problem(&ode, 12);
        let m = mean_agent_objective(view, &p, &plan(12)).unwrap();
        let grid = [-1.0, 0.0, 1.0];
        let mut best = f64::NEG_INFINITY;
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let ext: Vec<Vec<f64>> = plan(12).into_iter().map(|u| vec![u[0], a, b, c]).collect();
                    best = best.max(ocorl_objective(view, &p, &ext, 7.5).unwrap());
                }
            }
        }
        assert!(best >= m);
    }

    #[test]
    fn batch_scores_match_single_scores() {
        let ode = pendulum_env();
        let model = fitted(&ode);
        let spec = ObjectiveSpec::new(Regime::Static { lambda: 1.0 }).unwrap();
        let eval = AgentEvaluator {
            problem: problem(&ode, 8),
            agent: AgentKind::Combrl,
            objective: spec.clone(),
            view: ModelView::gp(&model),
        };
        let a = plan(8).concat();
        let b: Vec<f64> = a.iter().map(|u| -u).collect();
        let both = eval.evaluate(&[a.clone(), b.clone()], 0).unwrap();
        assert!((both[1] - eval.evaluate(&[b], 0).unwrap()[0]).abs() < 1e-12);
        assert!((both[0] - eval.evaluate(&[a], 0).unwrap()[0]).abs() < 1e-12);
    }

    #[test]
    fn divergent_rollouts_score_nan() {
        let ode = ControlledOde::new(
            "blowup",
            1,
            1,
            Arc::new(|x: &[f64], _u: &[f64], out: &mut [f64]| out[0] = x[0].powi(3)),
            Arc::new(|_x: &[f64], _u: &[f64]| 0.0),
        )
        .with_initial_state(vec![100.0]);
        let truth = TrueDrift(ode.clone());
        let v = mean_agent_objective(ModelView::deterministic(&truth), &problem(&ode, 20), &vec![vec![0.0]; 20]).unwrap();
        assert!(v.is_nan());
    }

    #[test]
    fn agent_names_parse() {
        for n in AGENT_NAMES {
            assert_eq!(AgentKind::from_name(n).unwrap().name(), n);
        }
        assert!(AgentKind::from_name("sac").is_err());
        let a: AgentKind = toml::from_str("algo = \"pets\"\nparticles = 4").unwrap();
        assert_eq!(a, AgentKind::Pets { particles: 4 });
    }
}
