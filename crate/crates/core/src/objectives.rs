//! Envelope objective functions and their analytic gradients.
//!
//! The basis objective for a p x k candidate basis G is
//! `log|G' M G| + log|G' (M + U)^-1 G|`; the sphere objective phi is its
//! one-direction analog on deflated matrices. Gradients are analytic because
//! the manifold solver evaluates them thousands of times per bootstrap
//! replicate.

use nalgebra::{DMatrix, DVector};

use crate::error::{EnvError, Result};
use crate::linalg::{logdet_spd, spd_inverse, SemiOrthoBasis, SymMatrix};

/// The moment pair (M, U) driving all envelope fitting, with the inverse of
/// M + U factorized once and shared across dimensions and solver iterations.
#[derive(Debug, Clone)]
pub struct MomentPair {
    m: SymMatrix,
    u: SymMatrix,
    mu_inv: SymMatrix,
    n: usize,
}

impl MomentPair {
    pub fn new(m: SymMatrix, u: SymMatrix, n: usize) -> Result<Self> {
        if m.dim() != u.dim() {
            return Err(EnvError::DimensionError(format!(
                "M is {0}x{0}, U is {1}x{1}",
                m.dim(),
                u.dim()
            )));
        }
        if n == 0 {
            return Err(EnvError::InvalidMatrix("sample size must be positive".into()));
        }
        let sum = SymMatrix::new(m.as_matrix() + u.as_matrix())?;
        let mu_inv = spd_inverse(&sum)
            .map_err(|_| EnvError::NotPositiveDefinite("M + U".into()))?;
        // M itself must be SPD as well
        spd_inverse(&m).map_err(|_| EnvError::NotPositiveDefinite("M".into()))?;
        Ok(Self { m, u, mu_inv, n })
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> &SymMatrix {
        &self.m
    }

    pub fn u(&self) -> &SymMatrix {
        &self.u
    }

    /// Cached (M + U)^-1.
    pub fn mu_inv(&self) -> &SymMatrix {
        &self.mu_inv
    }
}

/// J_n(G) = log|G' M G| + log|G' (M+U)^-1 G|.
pub fn j_objective(g: &SemiOrthoBasis, mp: &MomentPair) -> Result<f64> {
    if g.rows() != mp.dim() {
        return Err(EnvError::DimensionError(format!(
            "basis has {} rows, moments are {}-dimensional",
            g.rows(),
            mp.dim()
        )));
    }
    let gm = g.as_matrix();
    let a = SymMatrix::new(gm.transpose() * mp.m.as_matrix() * gm)?;
    let b = SymMatrix::new(gm.transpose() * mp.mu_inv.as_matrix() * gm)?;
    Ok(logdet_spd(&a)? + logdet_spd(&b)?)
}

/// Euclidean gradient of J_n:
/// 2 M G (G'MG)^-1 + 2 (M+U)^-1 G (G'(M+U)^-1 G)^-1.
pub fn j_gradient(g: &SemiOrthoBasis, mp: &MomentPair) -> Result<DMatrix<f64>> {
    let gm = g.as_matrix();
    let mg = mp.m.as_matrix() * gm;
    let wg = mp.mu_inv.as_matrix() * gm;
    let a = SymMatrix::new(gm.transpose() * &mg)?;
    let b = SymMatrix::new(gm.transpose() * &wg)?;
    let a_inv = spd_inverse(&a)?;
    let b_inv = spd_inverse(&b)?;
    Ok(mg * a_inv.as_matrix() * 2.0 + wg * b_inv.as_matrix() * 2.0)
}

/// phi(v) = log(v' Mk v) + log(v' (Mk+Uk)^-1 v) for a unit vector v.
pub fn phi_objective(v: &DVector<f64>, mk: &SymMatrix, uk: &SymMatrix) -> Result<f64> {
    let sum = SymMatrix::new(mk.as_matrix() + uk.as_matrix())?;
    let inv = spd_inverse(&sum)?;
    phi_objective_cached(v, mk, &inv)
}

/// phi gradient: 2 Mk v / (v'Mk v) + 2 (Mk+Uk)^-1 v / (v'(Mk+Uk)^-1 v).
pub fn phi_gradient(v: &DVector<f64>, mk: &SymMatrix, uk: &SymMatrix) -> Result<DVector<f64>> {
    let sum = SymMatrix::new(mk.as_matrix() + uk.as_matrix())?;
    let inv = spd_inverse(&sum)?;
    phi_gradient_cached(v, mk, &inv)
}

/// phi with (Mk+Uk)^-1 already computed.
pub(crate) fn phi_objective_cached(
    v: &DVector<f64>,
    mk: &SymMatrix,
    mu_inv: &SymMatrix,
) -> Result<f64> {
    let q1 = (v.transpose() * mk.as_matrix() * v)[(0, 0)];
    let q2 = (v.transpose() * mu_inv.as_matrix() * v)[(0, 0)];
    if q1 <= 0.0 || q2 <= 0.0 {
        return Err(EnvError::NotPositiveDefinite("quadratic form".into()));
    }
    Ok(q1.ln() + q2.ln())
}

pub(crate) fn phi_gradient_cached(
    v: &DVector<f64>,
    mk: &SymMatrix,
    mu_inv: &SymMatrix,
) -> Result<DVector<f64>> {
    let mv = mk.as_matrix() * v;
    let wv = mu_inv.as_matrix() * v;
    let q1 = v.dot(&mv);
    let q2 = v.dot(&wv);
    if q1 <= 0.0 || q2 <= 0.0 {
        return Err(EnvError::NotPositiveDefinite("quadratic form".into()));
    }
    Ok(mv * (2.0 / q1) + wv * (2.0 / q2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_unit(m: usize, rng: &mut impl Rng) -> DVector<f64> {
        let v = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);
        let n = v.norm();
        v / n
    }

    fn random_basis(p: usize, k: usize, rng: &mut impl Rng) -> SemiOrthoBasis {
        let a = DMatrix::from_fn(p, k, |_, _| rng.random::<f64>() - 0.5);
        let qr = a.qr();
        SemiOrthoBasis::new(qr.q().columns(0, k).into()).unwrap()
    }

    fn random_pair(p: usize, rng: &mut impl Rng) -> MomentPair {
        let a = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5);
        let m = SymMatrix::new(&a * a.transpose() + DMatrix::identity(p, p) * 0.5).unwrap();
        let b = DMatrix::from_fn(p, 1, |_, _| rng.random::<f64>() - 0.5);
        let u = SymMatrix::new(&b * b.transpose()).unwrap();
        MomentPair::new(m, u, 100).unwrap()
    }

    fn diag_pair() -> MomentPair {
        MomentPair::new(
            SymMatrix::from_diagonal(&[1.0, 2.0, 5.0]),
            SymMatrix::from_diagonal(&[0.0, 0.0, 4.0]),
            100,
        )
        .unwrap()
    }

    #[test]
    fn j_full_dimension_is_basis_free() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mp = random_pair(4, &mut rng);
        let expected = logdet_spd(mp.m()).unwrap()
            + logdet_spd(mp.mu_inv()).unwrap();
        for _ in 0..3 {
            let g = random_basis(4, 4, &mut rng);
            assert_abs_diff_eq!(j_objective(&g, &mp).unwrap(), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn j_diagonal_scalar_case() {
        let mp = diag_pair();
        let e3 = SemiOrthoBasis::new(DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])).unwrap();
        // log 5 + log(1/9) = log(5/9)
        assert_abs_diff_eq!(
            j_objective(&e3, &mp).unwrap(),
            (5.0f64 / 9.0).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn j_eigenspace_with_zero_u_is_zero() {
        let m = SymMatrix::from_diagonal(&[1.0, 2.0, 5.0]);
        let mp = MomentPair::new(m, SymMatrix::zeros(3), 50).unwrap();
        let e2 = SemiOrthoBasis::new(DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(j_objective(&e2, &mp).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn j_rotation_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mp = random_pair(5, &mut rng);
        let g = random_basis(5, 2, &mut rng);
        let theta = 0.7f64;
        let o = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let g_rot = SemiOrthoBasis::new(g.as_matrix() * o).unwrap();
        assert_abs_diff_eq!(
            j_objective(&g, &mp).unwrap(),
            j_objective(&g_rot, &mp).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn j_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = 5;
            let k = 2;
            let mp = random_pair(p, &mut rng);
            let g = random_basis(p, k, &mut rng);
            let grad = j_gradient(&g, &mp).unwrap();
            let h = 1e-6;
            let scale = grad.norm().max(1.0);
            for i in 0..p {
                for j in 0..k {
                    let mut gp = g.as_matrix().clone();
                    let mut gm = g.as_matrix().clone();
                    gp[(i, j)] += h;
                    gm[(i, j)] -= h;
                    // finite differences off-manifold: use unchecked wrappers
                    let fp = j_objective(&SemiOrthoBasis::new_unchecked(gp), &mp).unwrap();
                    let fm = j_objective(&SemiOrthoBasis::new_unchecked(gm), &mp).unwrap();
                    let fd = (fp - fm) / (2.0 * h);
                    assert!(
                        (grad[(i, j)] - fd).abs() / scale < 1e-5,
                        "entry ({i},{j}): analytic {} vs fd {fd}",
                        grad[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn phi_scalar_cases() {
        let mk = SymMatrix::from_diagonal(&[1.0, 4.0]);
        let uk = SymMatrix::from_diagonal(&[1.0, 9.0]);
        let e2 = DVector::from_column_slice(&[0.0, 1.0]);
        let e1 = DVector::from_column_slice(&[1.0, 0.0]);
        // phi(e2) = log 4 + log(1/13); phi(e1) = log 1 + log(1/2)
        assert_abs_diff_eq!(
            phi_objective(&e2, &mk, &uk).unwrap(),
            (4.0f64 / 13.0).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            phi_objective(&e1, &mk, &uk).unwrap(),
            0.5f64.ln(),
            epsilon = 1e-12
        );
        // Uk = 0, Mk = I: phi = 0 for any unit v
        let id = SymMatrix::identity(2);
        let z = SymMatrix::zeros(2);
        let v = DVector::from_column_slice(&[0.6, 0.8]);
        assert_abs_diff_eq!(phi_objective(&v, &id, &z).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn phi_sign_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mk = SymMatrix::from_diagonal(&[1.0, 4.0, 2.0]);
        let uk = SymMatrix::from_diagonal(&[0.5, 0.0, 1.0]);
        let v = random_unit(3, &mut rng);
        let f1 = phi_objective(&v, &mk, &uk).unwrap();
        let f2 = phi_objective(&(-&v), &mk, &uk).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn phi_gradient_identity_case() {
        let id = SymMatrix::identity(3);
        let z = SymMatrix::zeros(3);
        let v = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        let g = phi_gradient(&v, &id, &z).unwrap();
        // gradient = 4v, tangential component zero
        assert!((g - &v * 4.0).norm() < 1e-12);
    }

    #[test]
    fn phi_gradient_stationary_at_e2() {
        let mk = SymMatrix::from_diagonal(&[1.0, 4.0]);
        let uk = SymMatrix::from_diagonal(&[0.0, 9.0]);
        let v = DVector::from_column_slice(&[0.0, 1.0]);
        let g = phi_gradient(&v, &mk, &uk).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-12);
        // tangential part (I - vv')g vanishes
        let tang = &g - &v * v.dot(&g);
        assert!(tang.norm() < 1e-12);
    }

    #[test]
    fn phi_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = 4;
            let a = DMatrix::from_fn(m, m, |_, _| rng.random::<f64>() - 0.5);
            let mk = SymMatrix::new(&a * a.transpose() + DMatrix::identity(m, m) * 0.5).unwrap();
            let b = DMatrix::from_fn(m, 1, |_, _| rng.random::<f64>() - 0.5);
            let uk = SymMatrix::new(&b * b.transpose()).unwrap();
            let v = random_unit(m, &mut rng);
            let grad = phi_gradient(&v, &mk, &uk).unwrap();
            let scale = grad.norm().max(1.0);
            let h = 1e-6;
            for i in 0..m {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[i] += h;
                vm[i] -= h;
                let fd = (phi_objective(&vp, &mk, &uk).unwrap()
                    - phi_objective(&vm, &mk, &uk).unwrap())
                    / (2.0 * h);
                assert!(
                    (grad[i] - fd).abs() / scale < 1e-5,
                    "component {i}: {} vs {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn moment_pair_rejects_indefinite_m() {
        let m = SymMatrix::from_diagonal(&[1.0, -1.0]);
        let u = SymMatrix::zeros(2);
        assert!(MomentPair::new(m, u, 10).is_err());
    }
}
