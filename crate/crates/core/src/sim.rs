//! Simulation designs with exact envelope structure for the logistic and
//! Poisson families, dataset generation, and bootstrap SD-ratio tables.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_bootstrap, summarize, BootstrapConfig, BootstrapSummary};
use crate::error::{EnvError, Result};
use crate::glm::{Dataset, Family};
use crate::linalg::{eigen_sym, SemiOrthoBasis, SymMatrix};

pub const SIM_P: usize = 8;
pub const SIM_U: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
}

/// Generative design: predictor covariance with exact envelope structure and
/// a coefficient vector inside the envelope.
#[derive(Debug, Clone)]
pub struct SimSetting {
    pub family: Family,
    pub setting: Setting,
    pub gamma: SemiOrthoBasis,
    pub gamma0: SemiOrthoBasis,
    pub omega: Vec<f64>,
    pub omega0: Vec<f64>,
    pub sigma_x: SymMatrix,
    pub theta: DVector<f64>,
    sigma_half: DMatrix<f64>,
}

/// Full orthogonal factor of the QR decomposition of the constant unit
/// vector (1/sqrt(p), ..., 1/sqrt(p)), via a single Householder reflector.
fn householder_frame(p: usize) -> DMatrix<f64> {
    let scale = 1.0 / (p as f64).sqrt();
    let mut u = DVector::from_element(p, scale);
    // reflect onto -e1 (v[0] > 0), matching LAPACK's convention
    u[0] += 1.0;
    let unorm2 = u.norm_squared();
    let mut q = DMatrix::identity(p, p);
    q -= &u * u.transpose() * (2.0 / unorm2);
    q
}

impl SimSetting {
    pub fn family(&self) -> Family {
        self.family
    }
}

/// Builds the p = 8, u = 2 design for the requested family and setting.
pub fn build_setting(family: Family, setting: Setting) -> Result<SimSetting> {
    let p = SIM_P;
    let u = SIM_U;
    let frame = householder_frame(p);

    // logistic designs take the leading columns of the frame as the envelope
    // basis; Poisson designs take the trailing columns
    let (gamma_cols, gamma0_cols): (Vec<usize>, Vec<usize>) = match family {
        Family::Logistic => ((0..u).collect(), (u..p).collect()),
        Family::Poisson => (((p - u)..p).collect(), (0..(p - u)).collect()),
        Family::Linear => {
            return Err(EnvError::InvalidMatrix(
                "simulation settings are defined for logistic and poisson only".into(),
            ))
        }
    };
    let mut g = DMatrix::zeros(p, u);
    for (j, &c) in gamma_cols.iter().enumerate() {
        g.set_column(j, &frame.column(c));
    }
    let mut g0 = DMatrix::zeros(p, p - u);
    for (j, &c) in gamma0_cols.iter().enumerate() {
        g0.set_column(j, &frame.column(c));
    }

    let exp_range = |lo: i32, hi: i32| -> Vec<f64> {
        (lo..=hi).map(|e| (e as f64).exp()).collect()
    };
    let (omega, omega0): (Vec<f64>, Vec<f64>) = match (family, setting) {
        (Family::Logistic, Setting::A) => (vec![2.0, 3.0], exp_range(-4, 1)),
        (Family::Logistic, Setting::B) => (vec![(-4f64).exp(), (-5f64).exp()], exp_range(-3, 2)),
        (Family::Poisson, Setting::A) => (vec![1.0, 10.0], exp_range(-6, -1)),
        (Family::Poisson, Setting::B) => (vec![(-3f64).exp(), (-2f64).exp()], exp_range(-4, 1)),
        (Family::Linear, _) => unreachable!(),
    };

    let sigma = &g * DMatrix::from_diagonal(&DVector::from_row_slice(&omega)) * g.transpose()
        + &g0 * DMatrix::from_diagonal(&DVector::from_row_slice(&omega0)) * g0.transpose();
    let sigma_x = SymMatrix::new(sigma)?;

    // theta = Gamma * ones, normalized; a shorter vector keeps Poisson rates
    // numerically safe
    let target_norm = match family {
        Family::Logistic => 1.0,
        Family::Poisson => 0.5,
        Family::Linear => unreachable!(),
    };
    let mut theta = &g * DVector::from_element(u, 1.0);
    theta *= target_norm / theta.norm();

    // symmetric square root via the eigendecomposition
    let (vals, vecs) = eigen_sym(&sigma_x);
    let vm = vecs.as_matrix();
    let sigma_half =
        vm * DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt())) * vm.transpose();

    Ok(SimSetting {
        family,
        setting,
        gamma: SemiOrthoBasis::new_unchecked(g),
        gamma0: SemiOrthoBasis::new_unchecked(g0),
        omega,
        omega0,
        sigma_x,
        theta,
        sigma_half,
    })
}

/// Samples a dataset of size n from the design.
pub fn generate_dataset(ss: &SimSetting, n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let p = SIM_P;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let xi = &ss.sigma_half * z;
        let lin = ss.theta.dot(&xi);
        x.row_mut(i).copy_from(&xi.transpose());
        y[i] = match ss.family {
            Family::Logistic => {
                let prob = 1.0 / (1.0 + (-lin).exp());
                if rng.random::<f64>() < prob {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Poisson => {
                let rate = lin.min(30.0).exp();
                Poisson::new(rate).unwrap().sample(rng)
            }
            Family::Linear => unreachable!(),
        };
    }
    Dataset::new(x, y, ss.family, false)
}

/// One cell of the ratio table: first-component SD ratios for the weighted,
/// variable-u, and fixed-u estimators, plus the full summary.
#[derive(Debug, Clone)]
pub struct RatioCell {
    pub family: Family,
    pub setting: Setting,
    pub n: usize,
    pub ratio_w: Vec<Option<f64>>,
    pub ratio_varu: Vec<Option<f64>>,
    pub ratio_fixu: Vec<Option<f64>>,
    pub summary: BootstrapSummary,
}

/// Generates one dataset per (setting, n) cell and bootstraps it.
pub fn run_ratio_table(
    settings: &[(Family, Setting)],
    ns: &[usize],
    b: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<RatioCell>> {
    let mut cells = Vec::new();
    for (cell_idx, &(family, setting)) in settings.iter().enumerate() {
        let ss = build_setting(family, setting)?;
        for (n_idx, &n) in ns.iter().enumerate() {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(0xD5 + (cell_idx * ns.len() + n_idx) as u64);
            let ds = generate_dataset(&ss, n, &mut rng)?;
            let mut cfg = BootstrapConfig::new(b, seed ^ (n as u64));
            cfg.workers = workers;
            let reps = run_bootstrap(&ds, &cfg)?;
            let summary = summarize(&reps, SIM_P);
            cells.push(RatioCell {
                family,
                setting,
                n,
                ratio_w: summary.ratio_w.clone(),
                ratio_varu: summary.ratio_varu.clone(),
                ratio_fixu: summary.ratio_fixu.clone(),
                summary,
            });
        }
    }
    Ok(cells)
}
