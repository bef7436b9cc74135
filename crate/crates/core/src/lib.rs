//! Weighted envelope estimation for generalized linear models.
//!
//! The pipeline: fit a GLM, form the moment pair (M, U) from weighted
//! predictor moments, fit envelope bases at every candidate dimension with
//! the 1D algorithm (optionally refined by full Grassmann optimization),
//! weight the per-dimension estimators by an information criterion, and
//! quantify the result with a deterministic nonparametric bootstrap.

pub mod bootstrap;
pub mod criteria;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod objectives;
pub mod optim;
pub mod path;
pub mod sim;

pub use bootstrap::{
    fit_envelope, run_bootstrap, run_bootstrap_from, summarize, BootstrapConfig,
    BootstrapReplicates, BootstrapSummary, EnvelopeEstimate, ResampleMode,
};
pub use criteria::{
    compute_weights, criterion_1d, criterion_fg, select_dimension, weighted_estimator,
    CandidateRange, CriterionVector, WeightVector,
};
pub use error::{EnvError, Result};
pub use glm::{fit_glm_mle, moments, Dataset, Family, GlmFit, UScaling};
pub use linalg::{SemiOrthoBasis, SymMatrix};
pub use objectives::{j_objective, MomentPair};
pub use optim::SolverOptions;
pub use path::{fit_1d_path, fit_fg_path, EnvelopePath, PathMethod};
pub use sim::{build_setting, generate_dataset, run_ratio_table, Setting, SimSetting};
