//! Run configuration: per-environment presets overridden by a TOML file and
//! then by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::AgentKind;
use crate::env::{env_by_name, ControlledOde};
use crate::error::{Error, Result};
use crate::gp::{BetaRule, GpSettings, HyperOptConfig};
use crate::objective::{ObjectiveSpec, Regime};
use crate::planner::IcemConfig;

use super::downstream::{primary_task, task_ode};

/// How many derivative measurements an episode takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MssRule {
    /// One per control step, `m_n = ν T`.
    PerStep,
    /// `m_n = n`.
    Growing,
    /// A fixed count per episode.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSection {
    pub name: String,
    pub task: String,
    pub control_freq: f64,
    pub sigma_obs: f64,
    pub mss: MssRule,
    pub measurements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSection {
    pub algo: String,
    pub particles: usize,
    /// Hallucination radius for `ocorl`.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSection {
    pub icem: IcemConfig,
    /// Control steps executed per plan.
    pub replan_interval: usize,
    /// RK4 steps per control step in model rollouts.
    pub model_substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub beta_rule: BetaRule,
    pub delta: f64,
    pub rkhs_bound: f64,
    pub projection: bool,
    pub optimize_hyperparameters: bool,
    pub hyper_steps: usize,
    pub hyper_learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSection {
    pub regime: Regime,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Write measured wall-clock seconds into the per-episode CSVs; when off
    /// those columns are zero so logs are reproducible byte for byte.
    pub record_timings: bool,
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub environment: EnvSection,
    pub agent: AgentSection,
    pub planner: PlannerSection,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    name: Option<String>,
    task: Option<String>,
    control_freq: Option<f64>,
    sigma_obs: Option<f64>,
    mss: Option<MssRule>,
    measurements: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    algo: Option<String>,
    particles: Option<usize>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    horizon: Option<usize>,
    samples: Option<usize>,
    elites: Option<usize>,
    iterations: Option<usize>,
    momentum: Option<f64>,
    noise_exponent: Option<f64>,
    elite_keep_fraction: Option<f64>,
    init_std_fraction: Option<f64>,
    seed: Option<u64>,
    replan_interval: Option<usize>,
    model_substeps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    beta_rule: Option<BetaRule>,
    delta: Option<f64>,
    rkhs_bound: Option<f64>,
    projection: Option<bool>,
    optimize_hyperparameters: Option<bool>,
    hyper_steps: Option<usize>,
    hyper_learning_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    regime: Option<String>,
    lambda: Option<f64>,
    lambda0: Option<f64>,
    lambda_init: Option<f64>,
    learning_rate: Option<f64>,
    polyak: Option<f64>,
    episodes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    record_timings: Option<bool>,
    snapshots: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    environment: Option<RawEnv>,
    agent: Option<RawAgent>,
    planner: Option<RawPlanner>,
    model: Option<RawModel>,
    schedule: Option<RawSchedule>,
    output: Option<RawOutput>,
}

macro_rules! apply {
    ($src:expr => $dst:expr; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $src.$field { $dst.$field = v; } )*
    };
}

/// Command-line overrides applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub env: Option<String>,
    pub algo: Option<String>,
    pub seeds: Option<usize>,
    pub episodes: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reference settings for an environment.
    pub fn preset(env: &str) -> Result<Self> {
        let ode = env_by_name(env)?;
        let (freq, lambda, episodes, ocorl_beta, icem, sigma_obs) = if ode.name.starts_with("pendulum") {
            (20.0, 1.0, 12, 7.5, IcemConfig::pendulum(), 0.01)
        } else {
            (1.0, 1e6, 15, 30.0, IcemConfig::mountaincar(), 1e-4)
        };
        Ok(RunConfig {
            environment: EnvSection {
                name: ode.name.clone(),
                task: primary_task(&ode.name).to_string(),
                control_freq: freq,
                sigma_obs,
                mss: MssRule::PerStep,
                measurements: 0,
            },
            agent: AgentSection {
                algo: "combrl".into(),
                particles: 10,
                beta: ocorl_beta,
            },
            planner: PlannerSection {
                icem,
                replan_interval: 1,
                model_substeps: 1,
            },
            model: ModelSection {
                beta_rule: BetaRule::Fixed { value: 1.0 },
                delta: 0.1,
                rkhs_bound: 1.0,
                projection: false,
                optimize_hyperparameters: true,
                hyper_steps: HyperOptConfig::default().steps,
                hyper_learning_rate: HyperOptConfig::default().learning_rate,
            },
            schedule: ScheduleSection {
                regime: Regime::Static { lambda },
                episodes,
            },
            output: OutputSection {
                dir: PathBuf::from("runs").join(&ode.name),
                seeds: vec![0, 1, 2, 3, 4],
                record_timings: false,
                snapshots: true,
            },
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let env_name = raw
            .environment
            .as_ref()
            .and_then(|e| e.name.clone())
            .unwrap_or_else(|| "pendulum-gp".into());
        let mut cfg = Self::preset(&env_name)?;
        if let Some(e) = raw.environment {
            apply!(e => cfg.environment; task, control_freq, sigma_obs, mss, measurements);
        }
        if let Some(a) = raw.agent {
            apply!(a => cfg.agent; algo, particles, beta);
        }
        if let Some(p) = raw.planner {
            apply!(p => cfg.planner.icem; horizon, samples, elites, iterations, momentum,
                noise_exponent, elite_keep_fraction, init_std_fraction, seed);
            apply!(p => cfg.planner; replan_interval, model_substeps);
        }
        if let Some(m) = raw.model {
            apply!(m => cfg.model; beta_rule, delta, rkhs_bound, projection,
                optimize_hyperparameters, hyper_steps, hyper_learning_rate);
        }
        if let Some(s) = raw.schedule {
            if let Some(n) = s.episodes {
                cfg.schedule.episodes = n;
            }
            if let Some(name) = s.regime.as_deref() {
                cfg.schedule.regime = parse_regime(name, &s, cfg.schedule.episodes)?;
            } else if s.lambda.is_some() {
                cfg.schedule.regime = Regime::Static {
                    lambda: s.lambda.unwrap_or_default(),
                };
            }
        }
        if let Some(o) = raw.output {
            apply!(o => cfg.output; dir, seeds, record_timings, snapshots);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies command-line overrides. Switching environment re-derives the
    /// environment-specific presets before the remaining overrides.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(env) = &o.env {
            if env_by_name(env)?.name != env_by_name(&self.environment.name)?.name {
                let base = Self::preset(env)?;
                self.environment = base.environment;
                self.planner = base.planner;
                self.schedule = base.schedule;
                self.agent.beta = base.agent.beta;
            }
        }
        if let Some(a) = &o.algo {
            self.agent.algo = a.clone();
        }
        if let Some(k) = o.seeds {
            self.output.seeds = (0..k as u64).collect();
        }
        if let Some(n) = o.episodes {
            self.schedule.episodes = n;
            if let Regime::Annealing { episodes, .. } = &mut self.schedule.regime {
                *episodes = n;
            }
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ode = self.ode()?;
        if self.schedule.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.output.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.environment.sigma_obs >= 0.0) {
            return Err(Error::Config("sigma_obs must be non-negative".into()));
        }
        crate::env::control_steps(ode.horizon, self.environment.control_freq)?;
        if self.environment.mss == MssRule::Fixed && self.environment.measurements == 0 {
            return Err(Error::Config("fixed measurement rule needs measurements > 0".into()));
        }
        if self.planner.model_substeps == 0 || self.planner.replan_interval == 0 {
            return Err(Error::Config("model_substeps and replan_interval must be positive".into()));
        }
        if !(self.model.delta > 0.0 && self.model.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        self.planner.icem.validate()?;
        self.agent_kind()?.validate()?;
        ObjectiveSpec::new(self.schedule.regime.clone())?;
        Ok(())
    }

    pub fn ode(&self) -> Result<ControlledOde> {
        task_ode(&env_by_name(&self.environment.name)?, &self.environment.task)
    }

    pub fn agent_kind(&self) -> Result<AgentKind> {
        Ok(match AgentKind::from_name(&self.agent.algo)? {
            AgentKind::Pets { .. } => AgentKind::Pets {
                particles: self.agent.particles,
            },
            AgentKind::Ocorl { .. } => AgentKind::Ocorl { beta: self.agent.beta },
            other => other,
        })
    }

    /// The objective schedule; baselines always plan greedily.
    pub fn objective(&self) -> Result<ObjectiveSpec> {
        if self.agent_kind()?.uses_intrinsic_reward() {
            ObjectiveSpec::new(self.schedule.regime.clone())
        } else {
            Ok(ObjectiveSpec::greedy())
        }
    }

    pub fn gp_settings(&self, ode: &ControlledOde) -> GpSettings {
        let mut s = GpSettings::for_env(ode, self.environment.sigma_obs);
        s.beta_rule = self.model.beta_rule.clone();
        s.delta = self.model.delta;
        s.rkhs_bound = self.model.rkhs_bound;
        s.projection = self.model.projection;
        s.hyper = HyperOptConfig {
            steps: self.model.hyper_steps,
            learning_rate: self.model.hyper_learning_rate,
        };
        s
    }

    pub fn control_steps(&self) -> Result<usize> {
        crate::env::control_steps(self.ode()?.horizon, self.environment.control_freq)
    }

    /// Measurements taken in (1-based) episode `n`.
    pub fn measurements(&self, n: usize) -> Result<usize> {
        Ok(match self.environment.mss {
            MssRule::PerStep => self.control_steps()?,
            MssRule::Growing => n,
            MssRule::Fixed => self.environment.measurements,
        })
    }

    /// Serialises in the flat layout accepted by [`RunConfig::from_toml_str`].
    pub fn to_toml(&self) -> String {
        let mut doc = toml::Table::try_from(self).expect("run config serialises");
        if let Some(toml::Value::Table(planner)) = doc.get_mut("planner") {
            if let Some(toml::Value::Table(icem)) = planner.remove("icem") {
                planner.extend(icem);
            }
        }
        if let Some(toml::Value::Table(schedule)) = doc.get_mut("schedule") {
            if let Some(toml::Value::Table(mut regime)) = schedule.remove("regime") {
                regime.remove("episodes");
                schedule.extend(regime);
            }
        }
        toml::to_string(&doc).expect("run config serialises")
    }

    /// SHA-256 of the canonical serialisation, ignoring output placement.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("run config serialises")))
    }
}

fn parse_regime(name: &str, s: &RawSchedule, episodes: usize) -> Result<Regime> {
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| Error::Config(format!("regime '{name}' needs '{key}'")))
    };
    Ok(match name {
        "greedy" => Regime::Greedy,
        "static" => Regime::Static {
            lambda: need(s.lambda, "lambda")?,
        },
        "annealing" => Regime::Annealing {
            lambda0: need(s.lambda0.or(s.lambda), "lambda0")?,
            episodes,
        },
        "auto" => Regime::Auto {
            lambda_init: need(s.lambda_init.or(s.lambda), "lambda_init")?,
            learning_rate: s.learning_rate.unwrap_or(0.1),
            polyak: s.polyak.unwrap_or(0.005),
        },
        "unsupervised" => Regime::Unsupervised,
        other => {
            return Err(Error::Config(format!(
                "unknown regime '{other}' (expected greedy, static, annealing, auto or unsupervised)"
            )))
        }
    })
}
