use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure in {context}: {detail}")]
    Numeric { context: &'static str, detail: String },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("function is not integrable under the kernel: smallest eigenvalue of I - BF is {min_eigenvalue:e}")]
    NonIntegrable { min_eigenvalue: f64 },

    #[error("walker population extinct at step {step}: every potential value is zero")]
    Extinction { step: usize },

    #[error("walker {walker} left the state space at step {step}")]
    NonFinite { step: usize, walker: usize },

    #[error("no stable k-step model up to k = {k_max} (smallest eigenvalues of S_k - A_k'S_kA_k: {min_eigenvalues:?})")]
    StableKNotFound {
        k_max: usize,
        min_eigenvalues: Vec<f64>,
    },

    #[error("burn-in {burn_in} leaves no samples in a series of length {len}")]
    BurnInTooLong { burn_in: usize, len: usize },
}
