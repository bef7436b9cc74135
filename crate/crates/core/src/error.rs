use thiserror::Error;

/// Errors produced by envelope estimation routines.
#[derive(Error, Debug)]
pub enum EnvError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    #[error("objective or gradient returned a non-finite value")]
    NonFiniteObjective,

    #[error("penalty constant must be positive, got {0}")]
    InvalidPenalty(f64),

    #[error("degenerate IRLS weight at observation {index}")]
    DegenerateWeights { index: usize },

    #[error("linear predictor {value} at observation {index} would overflow exp()")]
    OverflowGuard { index: usize, value: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("GLM fit did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        best: Box<crate::glm::GlmFit>,
    },

    #[error("bootstrap skipped {skipped} of {total} replicates (limit 5%)")]
    TooManyFailures { skipped: usize, total: usize },

    #[error("solver failed at 1D step {step}: {source}")]
    PathStep {
        step: usize,
        #[source]
        source: Box<EnvError>,
    },
}

pub type Result<T> = std::result::Result<T, EnvError>;
