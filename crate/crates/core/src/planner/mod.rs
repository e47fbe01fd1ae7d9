//! iCEM trajectory optimisation and its receding-horizon driver.

mod icem;
mod mpc;
mod noise;

pub use icem::{plan, ActionPlan, CandidateEvaluator, IcemConfig, IterationStats};
pub use mpc::MpcController;
pub use noise::{colored_noise, NoiseTensor};
