//! Gaussian-process dynamics: one independent GP per state-derivative
//! dimension over state-action inputs.

mod beta;
mod hyper;
mod kernel;
mod model;
mod posterior;
mod projection;
mod snapshot;

pub use beta::{beta, BetaRule};
pub use hyper::{log_marginal_likelihood, optimize_hyperparameters, HyperOptConfig};
pub use kernel::RbfKernel;
pub use model::{stack_inputs, DriftModel, GpSettings, StatisticalModel, TrueDrift};
pub use posterior::{GpPosterior, JITTER_LADDER};
pub use projection::{project_to_rkhs_ball, projection_objective, ProjectedDim, ProjectedModel};
pub use snapshot::{ModelSnapshot, SNAPSHOT_SCHEMA_VERSION};
