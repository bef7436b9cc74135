//! Python bindings for the envelope estimation core.

use envkit::{
    fit_envelope, run_bootstrap_from, summarize, BootstrapConfig, CandidateRange, Dataset, Family,
    PathMethod, SolverOptions,
};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn parse_family(name: &str) -> PyResult<Family> {
    match name {
        "linear" => Ok(Family::Linear),
        "logistic" => Ok(Family::Logistic),
        "poisson" => Ok(Family::Poisson),
        other => Err(PyValueError::new_err(format!("unknown family '{other}'"))),
    }
}

fn parse_method(name: &str) -> PyResult<PathMethod> {
    match name {
        "1d" => Ok(PathMethod::OneD),
        "fg" => Ok(PathMethod::Fg),
        other => Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    }
}

fn parse_range(name: &str) -> PyResult<CandidateRange> {
    match name {
        "1p" => Ok(CandidateRange::OneToP),
        "0p" => Ok(CandidateRange::ZeroToP),
        other => Err(PyValueError::new_err(format!("unknown range '{other}'"))),
    }
}

fn build_dataset(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    family: &str,
    intercept: bool,
) -> PyResult<Dataset> {
    let n = x.len();
    if n == 0 {
        return Err(PyValueError::new_err("x is empty"));
    }
    let p = x[0].len();
    if x.iter().any(|row| row.len() != p) {
        return Err(PyValueError::new_err("x rows have unequal lengths"));
    }
    if y.len() != n {
        return Err(PyValueError::new_err("len(y) != len(x)"));
    }
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let yv = DVector::from_vec(y);
    Dataset::new(xm, yv, parse_family(family)?, intercept)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// One envelope fit, exposed to Python as a plain result object.
#[pyclass(name = "EnvelopeFit")]
struct PyEnvelopeFit {
    #[pyo3(get)]
    intercept: Option<f64>,
    #[pyo3(get)]
    theta_tilde: Vec<f64>,
    #[pyo3(get)]
    criteria: Vec<f64>,
    #[pyo3(get)]
    u_hat: usize,
    #[pyo3(get)]
    weights: Vec<f64>,
    #[pyo3(get)]
    theta_w: Vec<f64>,
    #[pyo3(get)]
    theta_u: Vec<f64>,
}

#[pyclass(name = "BootstrapResult")]
struct PyBootstrapResult {
    #[pyo3(get)]
    sd_w: Vec<f64>,
    #[pyo3(get)]
    sd_varu: Vec<f64>,
    #[pyo3(get)]
    sd_fixu: Vec<f64>,
    #[pyo3(get)]
    sd_mle: Vec<f64>,
    #[pyo3(get)]
    ratio_w: Vec<Option<f64>>,
    #[pyo3(get)]
    ratio_varu: Vec<Option<f64>>,
    #[pyo3(get)]
    ratio_fixu: Vec<Option<f64>>,
    #[pyo3(get)]
    u_distribution: Vec<f64>,
    #[pyo3(get)]
    replicates_used: usize,
    #[pyo3(get)]
    skipped: usize,
}

/// fit(x, y, family, method="1d", c=1.0, range="1p", intercept=False)
#[pyfunction]
#[pyo3(signature = (x, y, family, method="1d", c=1.0, range="1p", intercept=false))]
fn fit(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    family: &str,
    method: &str,
    c: f64,
    range: &str,
    intercept: bool,
) -> PyResult<PyEnvelopeFit> {
    let ds = build_dataset(x, y, family, intercept)?;
    let est = fit_envelope(
        &ds,
        parse_method(method)?,
        c,
        parse_range(range)?,
        &SolverOptions::default(),
    )
    .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyEnvelopeFit {
        intercept: intercept.then_some(est.glm.intercept),
        theta_tilde: est.glm.coefficients.clone(),
        criteria: est.criteria.values.clone(),
        u_hat: est.u_hat,
        weights: est.weights.weights.clone(),
        theta_w: est.theta_w.iter().copied().collect(),
        theta_u: est.theta_u.iter().copied().collect(),
    })
}

/// bootstrap(x, y, family, b=200, seed=13, method="1d", c=1.0, range="1p",
///           intercept=False, workers=None)
#[pyfunction]
#[pyo3(signature = (x, y, family, b=200, seed=13, method="1d", c=1.0, range="1p", intercept=false, workers=None))]
#[allow(clippy::too_many_arguments)]
fn bootstrap(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    family: &str,
    b: usize,
    seed: u64,
    method: &str,
    c: f64,
    range: &str,
    intercept: bool,
    workers: Option<usize>,
) -> PyResult<PyBootstrapResult> {
    let ds = build_dataset(x, y, family, intercept)?;
    let mut cfg = BootstrapConfig::new(b, seed);
    cfg.method = parse_method(method)?;
    cfg.c = c;
    cfg.candidate_range = parse_range(range)?;
    cfg.workers = workers;
    let est = fit_envelope(&ds, cfg.method, cfg.c, cfg.candidate_range, &cfg.solver)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let reps = run_bootstrap_from(&ds, &cfg, &est)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = summarize(&reps, ds.p());
    Ok(PyBootstrapResult {
        sd_w: s.sd_w,
        sd_varu: s.sd_varu,
        sd_fixu: s.sd_fixu,
        sd_mle: s.sd_mle,
        ratio_w: s.ratio_w,
        ratio_varu: s.ratio_varu,
        ratio_fixu: s.ratio_fixu,
        u_distribution: s.u_distribution,
        replicates_used: s.replicates_used,
        skipped: s.skipped,
    })
}

/// simulate_dataset(family, setting, n, seed) -> (x, y)
#[pyfunction]
fn simulate_dataset(
    family: &str,
    setting: &str,
    n: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    use rand::SeedableRng;
    let set = match setting {
        "A" => envkit::Setting::A,
        "B" => envkit::Setting::B,
        other => return Err(PyValueError::new_err(format!("unknown setting '{other}'"))),
    };
    let ss = envkit::build_setting(parse_family(family)?, set)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let ds = envkit::generate_dataset(&ss, n, &mut rng)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let x = (0..ds.n())
        .map(|i| ds.x.row(i).iter().copied().collect())
        .collect();
    let y = ds.y.iter().copied().collect();
    Ok((x, y))
}

#[pymodule]
fn envkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvelopeFit>()?;
    m.add_class::<PyBootstrapResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    Ok(())
}
