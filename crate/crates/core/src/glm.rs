//! GLM front-ends: maximum likelihood fitting by Newton iteration with step
//! halving, and construction of the moment pair (M, U) from a fitted model
//! for the linear, logistic, and Poisson families.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};
use crate::linalg::SymMatrix;
use crate::objectives::MomentPair;

const GRAD_TOL: f64 = 1e-8;
const STALL_GRAD_TOL: f64 = 1e-5;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 20;
const WEIGHT_FLOOR: f64 = 1e-12;
const POISSON_LINPRED_MAX: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
    Poisson,
}

/// Scaling convention for U = c c' / v. The outer-product-only variant is kept
/// for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UScaling {
    #[default]
    CrossCovOverVar,
    CrossCovOuter,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub family: Family,
    pub has_intercept: bool,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: Family, has_intercept: bool) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if y.len() != n {
            return Err(EnvError::DimensionError(format!(
                "X has {n} rows but y has length {}",
                y.len()
            )));
        }
        if n <= p {
            return Err(EnvError::DimensionError(format!(
                "need n > p, got n = {n}, p = {p}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::InvalidMatrix("non-finite entries in data".into()));
        }
        match family {
            Family::Logistic => {
                if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(EnvError::InvalidMatrix(
                        "logistic responses must be 0 or 1".into(),
                    ));
                }
            }
            Family::Poisson => {
                if y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(EnvError::InvalidMatrix(
                        "poisson responses must be nonnegative integers".into(),
                    ));
                }
            }
            Family::Linear => {}
        }
        Ok(Self {
            x,
            y,
            family,
            has_intercept,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Design matrix including the intercept column when configured.
    fn design(&self) -> DMatrix<f64> {
        if self.has_intercept {
            let n = self.n();
            let mut z = DMatrix::zeros(n, self.p() + 1);
            z.column_mut(0).fill(1.0);
            z.view_mut((0, 1), (n, self.p())).copy_from(&self.x);
            z
        } else {
            self.x.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl GlmFit {
    pub fn coef_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn log_likelihood(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    match family {
        Family::Linear => -0.5 * y.iter().zip(eta.iter()).map(|(y, t)| (y - t).powi(2)).sum::<f64>(),
        Family::Logistic => y
            .iter()
            .zip(eta.iter())
            .map(|(y, t)| y * t - softplus(*t))
            .sum(),
        Family::Poisson => y
            .iter()
            .zip(eta.iter())
            .map(|(y, t)| y * t - t.min(700.0).exp())
            .sum(),
    }
}

fn mean_and_weight(family: Family, t: f64) -> (f64, f64) {
    match family {
        Family::Linear => (t, 1.0),
        Family::Logistic => {
            let mu = logistic(t);
            // sigma(t) * sigma(-t) avoids the cancellation in mu * (1 - mu)
            // when |t| is large
            (mu, mu * logistic(-t))
        }
        Family::Poisson => {
            let mu = t.min(700.0).exp();
            (mu, mu)
        }
    }
}

/// Newton/IRLS maximum likelihood fit, deterministic from the data.
pub fn fit_glm_mle(ds: &Dataset) -> Result<GlmFit> {
    let z = ds.design();
    let n = ds.n();
    let d = z.ncols();
    let mut beta = DVector::zeros(d);
    let mut ll = log_likelihood(ds.family, &ds.y, &(&z * &beta));
    let mut grad_norm = f64::INFINITY;

    let make_fit = |beta: &DVector<f64>, converged: bool, iterations: usize| {
        if ds.has_intercept {
            GlmFit {
                intercept: beta[0],
                coefficients: beta.as_slice()[1..].to_vec(),
                converged,
                iterations,
            }
        } else {
            GlmFit {
                intercept: 0.0,
                coefficients: beta.as_slice().to_vec(),
                converged,
                iterations,
            }
        }
    };

    for iter in 1..=MAX_ITER {
        let eta = &z * &beta;
        let mut mu = DVector::zeros(n);
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let (m, wi) = mean_and_weight(ds.family, eta[i]);
            mu[i] = m;
            w[i] = wi;
        }
        let grad = z.transpose() * (&ds.y - &mu);
        grad_norm = grad.norm();
        if grad_norm < GRAD_TOL {
            return Ok(make_fit(&beta, true, iter - 1));
        }
        // Hessian of the negative log-likelihood: Z' W Z
        let mut zw = z.clone();
        for i in 0..n {
            for j in 0..d {
                zw[(i, j)] *= w[i];
            }
        }
        let hess = SymMatrix::new(z.transpose() * &zw)
            .map_err(|_| EnvError::RankDeficient)?;
        let step_mat = crate::linalg::spd_solve(
            &hess,
            &DMatrix::from_column_slice(d, 1, grad.as_slice()),
        )
        .map_err(|_| EnvError::RankDeficient)?;
        let step = DVector::from_column_slice(step_mat.as_slice());

        // step halving on likelihood decrease
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &beta + &step * scale;
            let cand_ll = log_likelihood(ds.family, &ds.y, &(&z * &cand));
            if cand_ll.is_finite() && cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // the likelihood can no longer improve at float precision; with
            // an essentially-zero gradient that is convergence, not failure
            if grad_norm < STALL_GRAD_TOL * (1.0 + (n as f64).sqrt()) {
                return Ok(make_fit(&beta, true, iter));
            }
            return Err(EnvError::NonConvergence {
                iterations: iter,
                grad_norm,
                best: Box::new(make_fit(&beta, false, iter)),
            });
        }
    }
    Err(EnvError::NonConvergence {
        iterations: MAX_ITER,
        grad_norm,
        best: Box::new(make_fit(&beta, false, MAX_ITER)),
    })
}

struct WeightedMoments {
    m: SymMatrix,
    u: SymMatrix,
}

/// Shared weighted moment construction: normalized weights, weighted centered
/// predictor covariance M, and rank-one U from the working response.
fn weighted_moments(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    raw_weights: &DVector<f64>,
    mu: &DVector<f64>,
    y: &DVector<f64>,
    scaling: UScaling,
) -> Result<WeightedMoments> {
    let n = x.nrows();
    let p = x.ncols();
    let nf = n as f64;

    let mean_w = raw_weights.sum() / nf;
    let w = raw_weights / mean_w;
    for (i, wi) in w.iter().enumerate() {
        if *wi < WEIGHT_FLOOR {
            return Err(EnvError::DegenerateWeights { index: i });
        }
    }

    // weighted predictor mean
    let mut xbar = DVector::zeros(p);
    for i in 0..n {
        xbar += x.row(i).transpose() * w[i];
    }
    xbar /= nf;

    let mut m = DMatrix::zeros(p, p);
    for i in 0..n {
        let xc = x.row(i).transpose() - &xbar;
        m += &xc * xc.transpose() * w[i];
    }
    m /= nf;

    // working response and its weighted moments
    let mut s = DVector::zeros(n);
    for i in 0..n {
        s[i] = t[i] + (y[i] - mu[i]) / w[i];
    }
    let sbar = s.iter().zip(w.iter()).map(|(s, w)| s * w).sum::<f64>() / nf;
    let mut c = DVector::zeros(p);
    let mut v = 0.0;
    for i in 0..n {
        let xc = x.row(i).transpose() - &xbar;
        let sc = s[i] - sbar;
        c += xc * (w[i] * sc);
        v += w[i] * sc * sc;
    }
    c /= nf;
    v /= nf;

    let u = match scaling {
        UScaling::CrossCovOverVar => {
            if v < 1e-12 {
                DMatrix::zeros(p, p)
            } else {
                &c * c.transpose() / v
            }
        }
        UScaling::CrossCovOuter => &c * c.transpose(),
    };

    Ok(WeightedMoments {
        m: SymMatrix::new(m)?,
        u: SymMatrix::new(u)?,
    })
}

fn linear_predictor(ds: &Dataset, fit: &GlmFit) -> DVector<f64> {
    let b = fit.coef_vector();
    let mut t = &ds.x * b;
    t.add_scalar_mut(fit.intercept);
    t
}

pub fn moments_logistic(ds: &Dataset, fit: &GlmFit) -> Result<MomentPair> {
    moments_logistic_with(ds, fit, UScaling::default())
}

pub fn moments_logistic_with(ds: &Dataset, fit: &GlmFit, scaling: UScaling) -> Result<MomentPair> {
    let t = linear_predictor(ds, fit);
    let n = ds.n();
    let mut w = DVector::zeros(n);
    let mut mu = DVector::zeros(n);
    for i in 0..n {
        let (m, wi) = mean_and_weight(Family::Logistic, t[i]);
        mu[i] = m;
        w[i] = wi;
    }
    let wm = weighted_moments(&ds.x, &t, &w, &mu, &ds.y, scaling)?;
    MomentPair::new(wm.m, wm.u, n)
}

pub fn moments_poisson(ds: &Dataset, fit: &GlmFit) -> Result<MomentPair> {
    moments_poisson_with(ds, fit, UScaling::default())
}

pub fn moments_poisson_with(ds: &Dataset, fit: &GlmFit, scaling: UScaling) -> Result<MomentPair> {
    let t = linear_predictor(ds, fit);
    let n = ds.n();
    for i in 0..n {
        if t[i] > POISSON_LINPRED_MAX {
            return Err(EnvError::OverflowGuard {
                index: i,
                value: t[i],
            });
        }
    }
    let mut w = DVector::zeros(n);
    let mut mu = DVector::zeros(n);
    for i in 0..n {
        let (m, wi) = mean_and_weight(Family::Poisson, t[i]);
        mu[i] = m;
        w[i] = wi;
    }
    let wm = weighted_moments(&ds.x, &t, &w, &mu, &ds.y, scaling)?;
    MomentPair::new(wm.m, wm.u, n)
}

/// Linear-family moments: ordinary centered covariance of X and rank-one U
/// from the unweighted cross-covariance with y.
pub fn moments_linear(ds: &Dataset, _fit: &GlmFit) -> Result<MomentPair> {
    let n = ds.n();
    let p = ds.p();
    let nf = n as f64;
    let xbar = ds.x.row_mean().transpose();
    let ybar = ds.y.mean();
    let mut m = DMatrix::zeros(p, p);
    let mut c = DVector::zeros(p);
    let mut v = 0.0;
    for i in 0..n {
        let xc = ds.x.row(i).transpose() - &xbar;
        let yc = ds.y[i] - ybar;
        m += &xc * xc.transpose();
        c += xc * yc;
        v += yc * yc;
    }
    m /= nf;
    c /= nf;
    v /= nf;
    let u = if v < 1e-12 {
        DMatrix::zeros(p, p)
    } else {
        &c * c.transpose() / v
    };
    MomentPair::new(SymMatrix::new(m)?, SymMatrix::new(u)?, n)
}

/// Dispatch on the dataset's family.
pub fn moments(ds: &Dataset, fit: &GlmFit) -> Result<MomentPair> {
    match ds.family {
        Family::Linear => moments_linear(ds, fit),
        Family::Logistic => moments_logistic(ds, fit),
        Family::Poisson => moments_poisson(ds, fit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Poisson, StandardNormal};

    fn small_linear_dataset() -> Dataset {
        let x = DMatrix::from_row_slice(6, 2, &[
            1.0, 0.5, -0.3, 1.2, 0.7, -0.8, -1.1, 0.2, 0.4, 0.9, -0.6, -0.4,
        ]);
        let y = DVector::from_column_slice(&[2.1, 0.3, 1.8, -1.5, 1.2, -0.9]);
        Dataset::new(x, y, Family::Linear, true).unwrap()
    }

    #[test]
    fn linear_fit_is_least_squares() {
        let ds = small_linear_dataset();
        let fit = fit_glm_mle(&ds).unwrap();
        assert!(fit.converged);
        // normal equations on the intercept-augmented design
        let z = ds.design();
        let zz = z.transpose() * &z;
        let zy = z.transpose() * &ds.y;
        let beta = zz.lu().solve(&zy).unwrap();
        assert_abs_diff_eq!(fit.intercept, beta[0], epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[0], beta[1], epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], beta[2], epsilon = 1e-10);
    }

    #[test]
    fn logistic_symmetric_data_zero_intercept() {
        // y flips under x -> -x, so the intercept must vanish
        let x = DMatrix::from_column_slice(8, 1, &[1.0, 2.0, 0.5, 1.5, -1.0, -2.0, -0.5, -1.5]);
        let y = DVector::from_column_slice(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let ds = Dataset::new(x, y, Family::Logistic, true).unwrap();
        let fit = fit_glm_mle(&ds).unwrap();
        assert!(fit.intercept.abs() < 1e-8, "intercept {}", fit.intercept);
    }

    #[test]
    fn poisson_recovers_known_coefficients() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let n = 5000;
        let theta = [0.4, -0.3];
        let mut x = DMatrix::zeros(n, 2);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let x1: f64 = StandardNormal.sample(&mut rng);
            let x2: f64 = StandardNormal.sample(&mut rng);
            x[(i, 0)] = x1;
            x[(i, 1)] = x2;
            let lambda = (theta[0] * x1 + theta[1] * x2).exp();
            y[i] = Poisson::new(lambda).unwrap().sample(&mut rng);
        }
        let ds = Dataset::new(x, y, Family::Poisson, false).unwrap();
        let fit = fit_glm_mle(&ds).unwrap();
        assert!(fit.converged);
        // loose Monte Carlo sanity bound: 3 standard errors ~ 3/sqrt(n)
        for (est, truth) in fit.coefficients.iter().zip(theta.iter()) {
            assert!(
                (est - truth).abs() < 3.0 / (n as f64).sqrt() * 2.0,
                "coefficient {est} vs {truth}"
            );
        }
    }

    #[test]
    fn logistic_moments_zero_coef_reduce_to_covariance() {
        let x = DMatrix::from_row_slice(6, 2, &[
            1.0, 0.5, -1.0, -0.5, 0.3, -0.2, -0.3, 0.2, 2.0, 1.0, -2.0, -1.0,
        ]);
        let y = DVector::from_column_slice(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let ds = Dataset::new(x.clone(), y, Family::Logistic, false).unwrap();
        let fit = GlmFit {
            intercept: 0.0,
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
        };
        let mp = moments_logistic(&ds, &fit).unwrap();
        // with constant weights M is the ordinary centered covariance of X
        let xbar = x.row_mean();
        let mut cov = DMatrix::zeros(2, 2);
        for i in 0..6 {
            let xc = x.row(i) - &xbar;
            cov += xc.transpose() * xc;
        }
        cov /= 6.0;
        assert!((mp.m().as_matrix() - cov).norm() < 1e-12);
    }

    #[test]
    fn u_is_rank_one_psd() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 40;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(n, |_, _| if rng.random::<f64>() > 0.5 { 1.0 } else { 0.0 });
        let ds = Dataset::new(x, y, Family::Logistic, false).unwrap();
        let fit = fit_glm_mle(&ds).unwrap();
        let mp = moments_logistic(&ds, &fit).unwrap();
        let (vals, _) = crate::linalg::eigen_sym(mp.u());
        assert!(vals[0] >= -1e-12);
        for v in vals.iter().skip(1) {
            assert!(v.abs() < 1e-10, "U not rank one: {vals}");
        }
    }

    #[test]
    fn linear_moments_constructed_case() {
        // y = x1 exactly with X whose sample covariance is diagonal
        let x = DMatrix::from_row_slice(4, 2, &[
            1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0,
        ]);
        let y = DVector::from_column_slice(&[1.0, 1.0, -1.0, -1.0]);
        let ds = Dataset::new(x, y, Family::Linear, false).unwrap();
        let fit = fit_glm_mle(&ds).unwrap();
        let mp = moments_linear(&ds, &fit).unwrap();
        // U proportional to e1 e1'
        assert!(mp.u().as_matrix()[(0, 0)] > 0.5);
        assert!(mp.u().as_matrix()[(1, 1)].abs() < 1e-12);
    }

    #[test]
    fn linear_moments_constant_response() {
        let x = DMatrix::from_row_slice(4, 2, &[
            1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0,
        ]);
        let y = DVector::from_column_slice(&[2.0, 2.0, 2.0, 2.0]);
        let ds = Dataset::new(x, y, Family::Linear, false).unwrap();
        let fit = GlmFit {
            intercept: 2.0,
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
        };
        let mp = moments_linear(&ds, &fit).unwrap();
        assert_eq!(mp.u().as_matrix().norm(), 0.0);
    }

    #[test]
    fn poisson_overflow_guard() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 40.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let ds = Dataset::new(x, y, Family::Poisson, false).unwrap();
        let fit = GlmFit {
            intercept: 0.0,
            coefficients: vec![1.0],
            converged: true,
            iterations: 0,
        };
        match moments_poisson(&ds, &fit) {
            Err(EnvError::OverflowGuard { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected overflow guard, got {other:?}"),
        }
    }

    #[test]
    fn translation_invariance_of_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 60;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(n, |_, _| if rng.random::<f64>() > 0.5 { 1.0 } else { 0.0 });
        let ds = Dataset::new(x.clone(), y.clone(), Family::Logistic, true).unwrap();
        let fit = fit_glm_mle(&ds).unwrap();
        let mp1 = moments_logistic(&ds, &fit).unwrap();

        let mut x_shift = x.clone();
        for i in 0..n {
            x_shift[(i, 0)] += 5.0;
            x_shift[(i, 1)] -= 3.0;
            x_shift[(i, 2)] += 1.0;
        }
        // same linear predictor values: adjust intercept is not enough since
        // coefficients differ; instead reuse the original fit with adjusted
        // intercept so t_i is unchanged
        let shift = DVector::from_column_slice(&[5.0, -3.0, 1.0]);
        let adj = fit.coef_vector().dot(&shift);
        let fit_shift = GlmFit {
            intercept: fit.intercept - adj,
            coefficients: fit.coefficients.clone(),
            converged: true,
            iterations: fit.iterations,
        };
        let ds_shift = Dataset::new(x_shift, y, Family::Logistic, true).unwrap();
        let mp2 = moments_logistic(&ds_shift, &fit_shift).unwrap();
        assert!((mp1.m().as_matrix() - mp2.m().as_matrix()).norm() < 1e-10);
        assert!((mp1.u().as_matrix() - mp2.u().as_matrix()).norm() < 1e-10);
    }

    #[test]
    fn normalized_weights_mean_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let n = 30;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = DVector::from_fn(n, |_, _| if rng.random::<f64>() > 0.4 { 1.0 } else { 0.0 });
        let ds = Dataset::new(x, y, Family::Logistic, false).unwrap();
        let fit = fit_glm_mle(&ds).unwrap();
        let t = linear_predictor(&ds, &fit);
        let raw = DVector::from_fn(n, |i, _| {
            let (_, w) = mean_and_weight(Family::Logistic, t[i]);
            w
        });
        let w = &raw / (raw.sum() / n as f64);
        assert_abs_diff_eq!(w.sum() / n as f64, 1.0, epsilon = 1e-12);
    }
}
