use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentEvaluator, AgentKind, ModelView, PlanningProblem};
use crate::env::{observe, rollout, ControlledOde, DerivativeDataset, EquidistantMss, Policy, Trajectory};
use crate::error::{Error, Result};
use crate::gp::{project_to_rkhs_ball, GpSettings, ProjectedModel, StatisticalModel};
use crate::objective::{ObjectiveSpec, PolyakTarget};
use crate::planner::MpcController;
use crate::rng;

use super::config::{PlannerSection, RunConfig};
use super::metrics::uncertainty_integral;

const STREAM_PLAN: u64 = 1;
const STREAM_OBSERVE: u64 = 2;

/// One executed control step as seen by the planner, kept for auto-tuning.
#[derive(Debug, Clone)]
pub struct PlannedStep {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// First action of the Polyak-averaged plan mean at this step.
    pub target_action: Option<Vec<f64>>,
}

/// Receding-horizon iCEM over an agent's model, usable as an env policy.
pub struct PlanningPolicy<'a> {
    ode: &'a ControlledOde,
    agent: AgentKind,
    objective: ObjectiveSpec,
    view: ModelView<'a>,
    mpc: MpcController,
    freq: f64,
    substeps: usize,
    seed: u64,
    target: Option<PolyakTarget>,
    pub plan_seconds: f64,
    pub steps: Vec<PlannedStep>,
}

impl<'a> PlanningPolicy<'a> {
    pub fn new(
        ode: &'a ControlledOde,
        agent: AgentKind,
        objective: ObjectiveSpec,
        view: ModelView<'a>,
        planner: &PlannerSection,
        freq: f64,
        seed: u64,
    ) -> Result<Self> {
        let mpc = MpcController::new(planner.icem.clone(), agent.plan_bounds(ode), planner.replan_interval)?;
        let target = objective.polyak_rate().map(PolyakTarget::new);
        Ok(PlanningPolicy {
            ode,
            agent,
            objective,
            view,
            mpc,
            freq,
            substeps: planner.model_substeps,
            seed,
            target,
            plan_seconds: 0.0,
            steps: Vec::new(),
        })
    }
}

impl Policy for PlanningPolicy<'_> {
    fn act(&mut self, _t: f64, step: usize, x: &[f64]) -> Result<Vec<f64>> {
        let eval = AgentEvaluator {
            problem: PlanningProblem {
                ode: self.ode,
                x0: x.to_vec(),
                freq: self.freq,
                substeps: self.substeps,
                horizon: self.mpc.config().horizon,
            },
            agent: self.agent.clone(),
            objective: self.objective.clone(),
            view: self.view,
        };
        let before = self.mpc.replans();
        let start = Instant::now();
        let full = self.mpc.act(&eval, rng::derive(self.seed, &[step as u64]))?;
        self.plan_seconds += start.elapsed().as_secs_f64();
        let du = self.ode.action_dim;
        let action = full[..du].to_vec();
        if let (Some(target), Some(plan)) = (self.target.as_mut(), self.mpc.last_plan()) {
            if self.mpc.replans() != before {
                target.update(&plan.mean);
            }
            let pd = plan.dim;
            let first = target.value().map(|v| v[..pd][..du].to_vec());
            self.steps.push(PlannedStep {
                state: x.to_vec(),
                action: action.clone(),
                target_action: first,
            });
        }
        Ok(action)
    }
}

/// One row of a per-seed log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub gap: f64,
    pub cum_regret: f64,
    pub sigma_integral: f64,
    pub model_complexity: f64,
    pub lambda: f64,
    pub plan_seconds: f64,
    pub fit_seconds: f64,
}

/// Everything a seed carries from one episode to the next.
pub struct SeedState {
    pub seed: u64,
    pub ode: ControlledOde,
    pub settings: GpSettings,
    pub data: DerivativeDataset,
    /// `M_{n-1}`: the model used to plan the next episode.
    pub model: StatisticalModel,
    pub projected: Option<ProjectedModel>,
    pub objective: ObjectiveSpec,
    pub agent: AgentKind,
    pub episode: usize,
    pub cum_regret: f64,
    pub complexity: f64,
    pub expected_data: usize,
}

impl SeedState {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        let ode = cfg.ode()?;
        let settings = cfg.gp_settings(&ode);
        let model = StatisticalModel::prior(ode.state_dim, ode.action_dim, &settings)?;
        Ok(SeedState {
            seed,
            data: DerivativeDataset::new(ode.state_dim, ode.action_dim, cfg.environment.sigma_obs),
            settings,
            model,
            projected: None,
            objective: cfg.objective()?,
            agent: cfg.agent_kind()?,
            ode,
            episode: 0,
            cum_regret: 0.0,
            complexity: 0.0,
            expected_data: 0,
        })
    }
}

/// Wall-clock seconds spent in one episode, always measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EpisodeTiming {
    pub plan_seconds: f64,
    pub fit_seconds: f64,
}

pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub row: EpisodeRow,
    pub timing: EpisodeTiming,
}

/// Plans and executes one episode with `M_{n-1}`, observes it, refits the
/// model and appends the metrics.
pub fn run_episode(cfg: &RunConfig, state: &mut SeedState, oracle: f64) -> Result<EpisodeOutcome> {
    let n = state.episode + 1;
    let total = cfg.schedule.episodes;
    state.objective.schedule_step(n, total);
    let lambda = state.objective.lambda;
    let freq = cfg.environment.control_freq;

    let mut view = ModelView::gp(&state.model);
    if let Some(p) = &state.projected {
        view = view.with_mean(p);
    }
    let mut policy = PlanningPolicy::new(
        &state.ode,
        state.agent.clone(),
        state.objective.clone(),
        view,
        &cfg.planner,
        freq,
        rng::derive(state.seed, &[STREAM_PLAN, n as u64]),
    )?;
    let traj = rollout(&state.ode, &mut policy, freq)?;
    let plan_seconds = policy.plan_seconds;
    let steps = std::mem::take(&mut policy.steps);
    drop(policy);

    let (sigma_integral, sigma_sq) = uncertainty_integral(&state.model, &traj)?;

    let m = cfg.measurements(n)?;
    let mss = EquidistantMss::new(m, state.ode.horizon);
    let records = observe(
        &traj,
        &mss,
        &state.ode,
        cfg.environment.sigma_obs,
        n,
        rng::derive(state.seed, &[STREAM_OBSERVE]),
    )?;
    state.data.extend(records);
    state.expected_data += m;
    if state.data.len() != state.expected_data {
        return Err(Error::Shape(format!(
            "dataset holds {} records after episode {n}, expected {}",
            state.data.len(),
            state.expected_data
        )));
    }

    let start = Instant::now();
    let kernels = state.model.kernels();
    state.model = if cfg.model.optimize_hyperparameters {
        StatisticalModel::refit(&state.data, &kernels, &state.settings, n)?
    } else {
        StatisticalModel::fit(&state.data, &state.settings.init_kernels, &state.settings, n)?
    };
    state.projected = if state.settings.projection {
        Some(project_to_rkhs_ball(&state.model.posteriors, state.settings.rkhs_bound)?)
    } else {
        None
    };
    let fit_seconds = start.elapsed().as_secs_f64();

    if state.objective.polyak_rate().is_some() {
        let gaps = uncertainty_gaps(&state.model, &steps)?;
        state.objective.auto_tune(&gaps);
    }

    let gap = oracle - traj.total_return;
    state.cum_regret += gap;
    state.complexity += sigma_sq;
    state.episode = n;
    let timing = EpisodeTiming {
        plan_seconds,
        fit_seconds,
    };
    let (plan_col, fit_col) = if cfg.output.record_timings {
        (plan_seconds, fit_seconds)
    } else {
        (0.0, 0.0)
    };
    log::info!(
        "seed {} episode {n}: return {:.4} gap {:.4} sigma {:.4} lambda {} ({:.1}s plan, {:.1}s fit)",
        state.seed,
        traj.total_return,
        gap,
        sigma_integral,
        lambda,
        plan_seconds,
        fit_seconds
    );
    Ok(EpisodeOutcome {
        row: EpisodeRow {
            seed: state.seed,
            episode: n,
            episode_return: traj.total_return,
            gap,
            cum_regret: state.cum_regret,
            sigma_integral,
            model_complexity: state.complexity,
            lambda,
            plan_seconds: plan_col,
            fit_seconds: fit_col,
        },
        trajectory: traj,
        timing,
    })
}

/// `‖σ(x, u)‖ − ‖σ(x, ū)‖` over the recorded steps that have a target.
fn uncertainty_gaps(model: &StatisticalModel, steps: &[PlannedStep]) -> Result<Vec<f64>> {
    let usable: Vec<&PlannedStep> = steps.iter().filter(|s| s.target_action.is_some()).collect();
    if usable.is_empty() {
        return Ok(Vec::new());
    }
    let (dx, du) = (model.state_dim(), model.action_dim());
    let build = |target: bool| {
        DMatrix::from_fn(usable.len(), dx + du, |r, c| {
            let s = usable[r];
            if c < dx {
                s.state[c]
            } else if target {
                s.target_action.as_ref().expect("filtered")[c - dx]
            } else {
                s.action[c - dx]
            }
        })
    };
    let current = model.std_norm_batch(&build(false))?;
    let target = model.std_norm_batch(&build(true))?;
    Ok((current - target).iter().copied().collect())
}

/// Per-seed result: rows for every completed episode, plus the failure if
/// the seed aborted.
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    pub timings: Vec<EpisodeTiming>,
    pub final_model: Option<StatisticalModel>,
    pub last_trajectory: Option<Trajectory>,
    pub error: Option<Error>,
}

/// Runs all episodes of one seed, handing each row to `on_row` as soon as
/// it exists.
pub fn run_seed(
    cfg: &RunConfig,
    seed: u64,
    oracle: f64,
    on_row: &mut dyn FnMut(&EpisodeRow) -> Result<()>,
) -> SeedRun {
    let mut out = SeedRun {
        seed,
        rows: Vec::new(),
        timings: Vec::new(),
        final_model: None,
        last_trajectory: None,
        error: None,
    };
    let mut state = match SeedState::new(cfg, seed) {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    };
    for _ in 0..cfg.schedule.episodes {
        let step = run_episode(cfg, &mut state, oracle).and_then(|o| {
            on_row(&o.row)?;
            Ok(o)
        });
        match step {
            Ok(o) => {
                out.rows.push(o.row);
                out.timings.push(o.timing);
                out.last_trajectory = Some(o.trajectory);
            }
            Err(e) => {
                log::warn!("seed {seed} aborted in episode {}: {e}", state.episode + 1);
                out.error = Some(e);
                break;
            }
        }
    }
    out.final_model = Some(state.model);
    out
}
