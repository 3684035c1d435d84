use thiserror::Error;

/// Errors produced by the regulation toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("{what} did not converge after {iterations} iterations (last update {last_update:.3e})")]
    Solver {
        what: &'static str,
        iterations: usize,
        last_update: f64,
        history: Vec<f64>,
    },

    #[error("simulation diverged after t = {last_valid_time}")]
    Divergence { last_valid_time: f64 },

    #[error("signal error: {0}")]
    Signal(String),

    #[error("outside the admissible domain: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
