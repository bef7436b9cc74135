//! First-order optimization on the unit sphere and the set of semi-orthogonal
//! matrices: Barzilai-Borwein steps, nonmonotone (windowed-max) backtracking,
//! and a Cayley-transform retraction that preserves feasibility at every
//! iterate.

use nalgebra::{DMatrix, DVector};

use crate::error::{EnvError, Result};
use crate::linalg::{eigen_sym, SemiOrthoBasis, SymMatrix};
use crate::objectives::phi_objective;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub xtol: f64,
    pub gtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
    pub nonmonotone_window: usize,
    pub bb_step_bounds: (f64, f64),
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-8,
            gtol: 1e-8,
            ftol: 1e-12,
            max_iter: 800,
            nonmonotone_window: 5,
            bb_step_bounds: (1e-20, 1e20),
            initial_step: 1e-3,
            backtrack_factor: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergedBy {
    Xtol,
    Gtol,
    Ftol,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SolverReport<M> {
    pub minimizer: M,
    pub objective: f64,
    pub iterations: usize,
    pub converged_by: ConvergedBy,
}

const MAX_BACKTRACKS: usize = 20;

/// BB descent with Cayley retraction over {X : X'X = I_k}. Returns the best
/// iterate seen, so the objective never exceeds the starting value.
fn minimize_orthogonal<F, G>(
    f: F,
    grad: G,
    x0: DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<SolverReport<DMatrix<f64>>>
where
    F: Fn(&DMatrix<f64>) -> Result<f64>,
    G: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let p = x0.nrows();
    let k = x0.ncols();
    let check = |v: f64| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EnvError::NonFiniteObjective)
        }
    };

    let mut x = x0;
    let mut fx = check(f(&x)?)?;
    let mut g = grad(&x)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(EnvError::NonFiniteObjective);
    }
    // Riemannian gradient D = G - X (X'G)
    let mut d = &g - &x * (x.transpose() * &g);
    let mut nrm_d = d.norm();

    let mut best_x = x.clone();
    let mut best_f = fx;
    let mut recent: Vec<f64> = vec![fx];
    let mut tau = opts.initial_step;

    let finish = |x: DMatrix<f64>, fx: f64, iterations: usize, by: ConvergedBy| SolverReport {
        minimizer: x,
        objective: fx,
        iterations,
        converged_by: by,
    };

    if nrm_d <= opts.gtol * g.norm().max(1.0) {
        return Ok(finish(x, fx, 0, ConvergedBy::Gtol));
    }

    for iter in 1..=opts.max_iter {
        let x_prev = x.clone();
        let f_prev = fx;
        let d_prev = d.clone();

        let cval = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let deriv = opts.sufficient_decrease * nrm_d * nrm_d;

        // Cayley curve X(tau) = X - tau * U (I + tau/2 V'U)^-1 V'X with
        // A = G X' - X G' = U V', U = [G, X], V = [X, -G].
        let mut u = DMatrix::zeros(p, 2 * k);
        u.view_mut((0, 0), (p, k)).copy_from(&g);
        u.view_mut((0, k), (p, k)).copy_from(&x);
        let mut v = DMatrix::zeros(p, 2 * k);
        v.view_mut((0, 0), (p, k)).copy_from(&x);
        v.view_mut((0, k), (p, k)).copy_from(&(-&g));
        let vtu = v.transpose() * &u;
        let vtx = v.transpose() * &x;

        let step_to = |tau: f64| -> Option<DMatrix<f64>> {
            let lhs = DMatrix::identity(2 * k, 2 * k) + &vtu * (tau * 0.5);
            let sol = lhs.lu().solve(&vtx)?;
            Some(&x - &u * (sol * tau))
        };

        let mut nls = 0usize;
        let (mut x_new, mut f_new);
        loop {
            match step_to(tau) {
                Some(cand) => {
                    x_new = cand;
                    f_new = check(f(&x_new)?)?;
                }
                None => {
                    f_new = f64::INFINITY;
                    x_new = x.clone();
                }
            }
            if f_new <= cval - tau * deriv {
                break;
            }
            nls += 1;
            if nls >= MAX_BACKTRACKS {
                // line search failed; hand back the best point seen
                return Ok(finish(best_x, best_f, iter, ConvergedBy::MaxIter));
            }
            tau *= opts.backtrack_factor;
        }

        // guard against feasibility drift along long Cayley curves
        let gram = x_new.transpose() * &x_new;
        if (&gram - DMatrix::identity(k, k)).norm() > 1e-12 {
            let qr = x_new.clone().qr();
            let q: DMatrix<f64> = qr.q().columns(0, k).into();
            let r = qr.r();
            // keep column directions (QR may flip signs)
            let mut fixed = q;
            for j in 0..k {
                if r[(j, j)] < 0.0 {
                    for i in 0..p {
                        fixed[(i, j)] = -fixed[(i, j)];
                    }
                }
            }
            x_new = fixed;
            f_new = check(f(&x_new)?)?;
        }

        x = x_new;
        fx = f_new;
        g = grad(&x)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteObjective);
        }
        d = &g - &x * (x.transpose() * &g);
        nrm_d = d.norm();

        if fx < best_f {
            best_f = fx;
            best_x = x.clone();
        }
        recent.push(fx);
        if recent.len() > opts.nonmonotone_window {
            recent.remove(0);
        }

        let s = &x - &x_prev;
        let x_diff = s.norm() / (p as f64).sqrt();
        let f_diff = (fx - f_prev).abs() / (f_prev.abs() + 1.0);

        if nrm_d <= opts.gtol * g.norm().max(1.0) {
            return Ok(finish(best_x, best_f, iter, ConvergedBy::Gtol));
        }
        if x_diff < opts.xtol {
            return Ok(finish(best_x, best_f, iter, ConvergedBy::Xtol));
        }
        if f_diff < opts.ftol {
            return Ok(finish(best_x, best_f, iter, ConvergedBy::Ftol));
        }

        // alternating Barzilai-Borwein step
        let y = &d - &d_prev;
        let ss = s.dot(&s);
        let sy = s.dot(&y).abs();
        let yy = y.dot(&y);
        tau = if sy > 0.0 {
            if iter % 2 == 1 {
                ss / sy
            } else {
                sy / yy.max(f64::MIN_POSITIVE)
            }
        } else {
            opts.initial_step
        };
        tau = tau.clamp(opts.bb_step_bounds.0, opts.bb_step_bounds.1);
    }

    Ok(finish(best_x, best_f, opts.max_iter, ConvergedBy::MaxIter))
}

/// Minimizes a function over the unit sphere.
pub fn optimize_sphere<F, G>(
    f: F,
    grad: G,
    v0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<SolverReport<DVector<f64>>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let m = v0.len();
    let x0 = DMatrix::from_column_slice(m, 1, v0.as_slice());
    let as_vec = |x: &DMatrix<f64>| DVector::from_column_slice(x.as_slice());
    let report = minimize_orthogonal(
        |x| f(&as_vec(x)),
        |x| {
            let g = grad(&as_vec(x))?;
            Ok(DMatrix::from_column_slice(m, 1, g.as_slice()))
        },
        x0,
        opts,
    )?;
    let mut v = as_vec(&report.minimizer);
    v /= v.norm();
    Ok(SolverReport {
        minimizer: v,
        objective: report.objective,
        iterations: report.iterations,
        converged_by: report.converged_by,
    })
}

/// Minimizes a function over p x k semi-orthogonal matrices.
pub fn optimize_stiefel<F, G>(
    f: F,
    grad: G,
    g0: &SemiOrthoBasis,
    opts: &SolverOptions,
) -> Result<SolverReport<SemiOrthoBasis>>
where
    F: Fn(&DMatrix<f64>) -> Result<f64>,
    G: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let report = minimize_orthogonal(f, grad, g0.as_matrix().clone(), opts)?;
    Ok(SolverReport {
        minimizer: SemiOrthoBasis::new_unchecked(report.minimizer),
        objective: report.objective,
        iterations: report.iterations,
        converged_by: report.converged_by,
    })
}

/// Starting vector for the 1D sphere problem: the eigenvector of Mk or of
/// Mk + Uk with the smallest phi value.
pub fn init_1d(mk: &SymMatrix, uk: &SymMatrix) -> Result<DVector<f64>> {
    let sum = SymMatrix::new(mk.as_matrix() + uk.as_matrix())?;
    let (_, vm) = eigen_sym(mk);
    let (_, vs) = eigen_sym(&sum);
    let m = mk.dim();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for source in [vm.as_matrix(), vs.as_matrix()] {
        for j in 0..m {
            let v: DVector<f64> = source.column(j).into();
            let val = phi_objective(&v, mk, uk)?;
            if best.as_ref().map_or(true, |(b, _)| val < *b) {
                best = Some((val, v));
            }
        }
    }
    Ok(best.unwrap().1)
}
