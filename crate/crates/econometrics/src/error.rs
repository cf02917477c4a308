use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("structural error: {0}")]
    Structure(String),

    /// A correlation with a constant series; reported instead of a NaN.
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient_norm:.3e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },

    #[error(transparent)]
    Log(#[from] vcm_core::Error),
}
