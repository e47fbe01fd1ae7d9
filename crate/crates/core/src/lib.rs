//! Continuous-time model-based reinforcement learning laboratory.
//!
//! The crate couples four pieces:
//!
//! * [`env`]: controlled ODE environments, a fixed-step RK4 integrator,
//!   equidistant measurement selection and noisy derivative observations.
//! * [`gp`]: an independent Gaussian-process posterior per state dimension,
//!   marginal-likelihood hyperparameter fitting, confidence scaling and the
//!   RKHS-ball projection of the posterior mean.
//! * [`planner`] and [`objective`]: an iCEM trajectory optimizer with colored
//!   noise, run in receding horizon over a learned model, and the blended
//!   reward-plus-uncertainty running objective with its weight schedules.
//! * [`agents`] and [`harness`]: the optimistic agent and its baselines (mean
//!   planner, PETS TS-1, hallucinated-input OCORL) plus the episodic loop,
//!   metrics, persistence and the CLI plumbing.

pub mod agents;
pub mod env;
pub mod error;
pub mod gp;
pub mod harness;
pub mod objective;
pub mod planner;
pub mod rng;

pub use error::{Error, Result};
