//! Envelope solution paths over candidate dimensions k = 1..p: the sequential
//! 1D algorithm with deflation, and full basis optimization warm-started from
//! the 1D path.

use nalgebra::{DMatrix, DVector};

use crate::error::{EnvError, Result};
use crate::linalg::{logdet_spd, orthonormal_complement, SemiOrthoBasis, SymMatrix};
use crate::objectives::{
    j_gradient, j_objective, phi_gradient_cached, phi_objective_cached, MomentPair,
};
use crate::optim::{init_1d, optimize_sphere, optimize_stiefel, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMethod {
    OneD,
    Fg,
}

/// Fit result at one candidate dimension.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub k: usize,
    pub basis: SemiOrthoBasis,
    /// Per-direction phi values; present only on 1D paths.
    pub phi_values: Option<Vec<f64>>,
    pub j_value: f64,
    pub theta_k: DVector<f64>,
}

/// Per-dimension fits for k = 1..p. The k = 0 entry is implicit: theta_0 = 0
/// and criterion value 0.
#[derive(Debug, Clone)]
pub struct EnvelopePath {
    pub entries: Vec<PathEntry>,
    pub theta_tilde: DVector<f64>,
    pub mp: MomentPair,
    pub method: PathMethod,
}

impl EnvelopePath {
    pub fn dim(&self) -> usize {
        self.mp.dim()
    }

    pub fn entry(&self, k: usize) -> &PathEntry {
        &self.entries[k - 1]
    }
}

/// Projects theta onto span(basis): Gamma Gamma' theta.
pub fn project_estimator(basis: &SemiOrthoBasis, theta_tilde: &DVector<f64>) -> Result<DVector<f64>> {
    if basis.rows() != theta_tilde.len() {
        return Err(EnvError::DimensionError(format!(
            "basis has {} rows, theta has length {}",
            basis.rows(),
            theta_tilde.len()
        )));
    }
    let g = basis.as_matrix();
    Ok(g * (g.transpose() * theta_tilde))
}

/// Flips the sign so the first coordinate above tolerance is positive.
fn fix_sign(v: &mut DVector<f64>) {
    for x in v.iter() {
        if x.abs() > 1e-12 {
            if *x < 0.0 {
                *v = -v.clone();
            }
            return;
        }
    }
}

/// Sequential 1D algorithm: extract one direction at a time from deflated
/// (M_k, U_k), recompleting the orthonormal complement at every step.
pub fn fit_1d_path(
    mp: &MomentPair,
    theta_tilde: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<EnvelopePath> {
    let p = mp.dim();
    if theta_tilde.len() != p {
        return Err(EnvError::DimensionError(format!(
            "theta has length {}, moments are {p}-dimensional",
            theta_tilde.len()
        )));
    }

    let mut directions = DMatrix::<f64>::zeros(p, p);
    let mut complement = DMatrix::identity(p, p);
    let mut mk = mp.m().clone();
    let mut uk = mp.u().clone();
    let mut phi_values = Vec::with_capacity(p);
    let mut entries = Vec::with_capacity(p);

    for k in 1..=p {
        let m = p - (k - 1);
        let step_err = |e: EnvError| EnvError::PathStep {
            step: k,
            source: Box::new(e),
        };

        let (v, phi) = if m == 1 {
            let mv = mk.as_matrix()[(0, 0)];
            let sv = mv + uk.as_matrix()[(0, 0)];
            if mv <= 0.0 || sv <= 0.0 {
                return Err(step_err(EnvError::NotPositiveDefinite(
                    "deflated 1x1 problem".into(),
                )));
            }
            (DVector::from_column_slice(&[1.0]), mv.ln() - sv.ln())
        } else {
            let sum = SymMatrix::new(mk.as_matrix() + uk.as_matrix()).map_err(step_err)?;
            let inv = crate::linalg::spd_inverse(&sum).map_err(step_err)?;
            let v0 = init_1d(&mk, &uk).map_err(step_err)?;
            let report = optimize_sphere(
                |v| phi_objective_cached(v, &mk, &inv),
                |v| phi_gradient_cached(v, &mk, &inv),
                &v0,
                opts,
            )
            .map_err(step_err)?;
            (report.minimizer, report.objective)
        };
        phi_values.push(phi);

        let mut g_new = &complement * &v;
        fix_sign(&mut g_new);
        directions.set_column(k - 1, &g_new);

        let basis = SemiOrthoBasis::new_unchecked(directions.columns(0, k).into());
        let j_value = j_objective(&basis, mp).map_err(step_err)?;
        let theta_k = if k == p {
            theta_tilde.clone()
        } else {
            project_estimator(&basis, theta_tilde)?
        };
        entries.push(PathEntry {
            k,
            basis: basis.clone(),
            phi_values: Some(phi_values.clone()),
            j_value,
            theta_k,
        });

        if k < p {
            complement = orthonormal_complement(&basis).map_err(step_err)?.into_matrix();
            mk = SymMatrix::new(complement.transpose() * mp.m().as_matrix() * &complement)
                .map_err(step_err)?;
            uk = SymMatrix::new(complement.transpose() * mp.u().as_matrix() * &complement)
                .map_err(step_err)?;
        }
    }

    Ok(EnvelopePath {
        entries,
        theta_tilde: theta_tilde.clone(),
        mp: mp.clone(),
        method: PathMethod::OneD,
    })
}

/// Full basis optimization at each dimension, warm-started from a 1D path
/// over the same moment pair.
pub fn fit_fg_path(
    mp: &MomentPair,
    theta_tilde: &DVector<f64>,
    opts: &SolverOptions,
    warm_start: &EnvelopePath,
) -> Result<EnvelopePath> {
    let p = mp.dim();
    if warm_start.dim() != p {
        return Err(EnvError::DimensionError(
            "warm start path has a different dimension".into(),
        ));
    }
    let mut entries = Vec::with_capacity(p);
    for k in 1..=p {
        let warm = &warm_start.entry(k).basis;
        let (basis, j_value) = if k == p {
            // objective is basis-free at full dimension
            let j = logdet_spd(mp.m())? + logdet_spd(mp.mu_inv())?;
            (warm.clone(), j)
        } else {
            let report = optimize_stiefel(
                |x| j_objective(&SemiOrthoBasis::new_unchecked(x.clone()), mp),
                |x| j_gradient(&SemiOrthoBasis::new_unchecked(x.clone()), mp),
                warm,
                opts,
            )?;
            let mut g = report.minimizer.into_matrix();
            for j in 0..k {
                let mut col: DVector<f64> = g.column(j).into();
                fix_sign(&mut col);
                g.set_column(j, &col);
            }
            (SemiOrthoBasis::new_unchecked(g), report.objective)
        };
        let theta_k = if k == p {
            theta_tilde.clone()
        } else {
            project_estimator(&basis, theta_tilde)?
        };
        entries.push(PathEntry {
            k,
            basis,
            phi_values: None,
            j_value,
            theta_k,
        });
    }
    Ok(EnvelopePath {
        entries,
        theta_tilde: theta_tilde.clone(),
        mp: mp.clone(),
        method: PathMethod::Fg,
    })
}
