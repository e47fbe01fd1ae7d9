//! The episodic learning loop, its metrics, persistence and CLI plumbing.

pub mod config;
pub mod downstream;
pub mod episode;
pub mod metrics;
pub mod oracle;
pub mod suite;

pub use config::{MssRule, Overrides, PlannerSection, RunConfig};
pub use downstream::{downstream_eval, downstream_task, task_ode, DownstreamTask, MOUNTAINCAR_TASKS, PENDULUM_TASKS};
pub use episode::{run_episode, run_seed, EpisodeRow, EpisodeTiming, PlanningPolicy, SeedRun, SeedState};
pub use metrics::{mean_stderr, regret_metrics, uncertainty_integral};
pub use oracle::{oracle_return, oracle_seed, OracleCache, OracleKey};
pub use suite::{run_suite, run_suite_with_cache, worker_count, SuiteOutcome, CSV_HEADER};
