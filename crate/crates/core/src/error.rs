use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The integrator produced a non-finite state or derivative.
    #[error("integration failure: non-finite {quantity} in dimension {dim} at value {value}")]
    Integration {
        quantity: &'static str,
        dim: usize,
        value: f64,
    },
    #[error("kernel matrix is ill-conditioned (condition estimate {condition:.3e}, jitter up to {jitter:.1e})")]
    IllConditioned { condition: f64, jitter: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integration { .. }
                | Error::IllConditioned { .. }
                | Error::Planning(_)
                | Error::Solver(_)
        )
    }
}
