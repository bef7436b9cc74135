//! Dense symmetric linear algebra primitives shared by the envelope fitting
//! routines: symmetric eigendecomposition, Cholesky-based log-determinants and
//! solves, orthonormal completion, and principal angles between subspaces.

use nalgebra::{DMatrix, DVector};

use crate::error::{EnvError, Result};

/// A dense symmetric real matrix. Input is symmetrized on construction since
/// bootstrap moment matrices accumulate rounding asymmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(EnvError::InvalidMatrix(format!(
                "expected square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(EnvError::InvalidMatrix("non-finite entries".into()));
        }
        let sym = (&a + a.transpose()) * 0.5;
        Ok(Self { data: sym })
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            data: DMatrix::from_diagonal(&DVector::from_row_slice(d)),
        }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            data: DMatrix::identity(p, p),
        }
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            data: DMatrix::zeros(p, p),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

/// A p x k matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiOrthoBasis {
    data: DMatrix<f64>,
}

impl SemiOrthoBasis {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if g.ncols() > g.nrows() {
            return Err(EnvError::DimensionError(format!(
                "basis has more columns ({}) than rows ({})",
                g.ncols(),
                g.nrows()
            )));
        }
        let gram = g.transpose() * &g;
        let resid = &gram - DMatrix::identity(g.ncols(), g.ncols());
        if resid.norm() > 1e-10 {
            return Err(EnvError::InvalidMatrix(format!(
                "columns not orthonormal, ||G'G - I|| = {:.3e}",
                resid.norm()
            )));
        }
        Ok(Self { data: g })
    }

    /// Skips the orthonormality check; callers must guarantee it.
    pub(crate) fn new_unchecked(g: DMatrix<f64>) -> Self {
        Self { data: g }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
/// Reconstruction A = V diag(lambda) V' holds to ~1e-10 relative Frobenius.
pub fn eigen_sym(a: &SymMatrix) -> (DVector<f64>, SemiOrthoBasis) {
    let eig = a.as_matrix().clone().symmetric_eigen();
    let p = a.dim();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, SemiOrthoBasis::new_unchecked(vectors))
}

fn cholesky(a: &SymMatrix) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    a.as_matrix().clone().cholesky().ok_or_else(|| {
        EnvError::NotPositiveDefinite(format!("{}x{} Cholesky failed", a.dim(), a.dim()))
    })
}

/// log|A| for symmetric positive definite A via Cholesky. Summing logs of the
/// factor diagonal avoids determinant overflow.
pub fn logdet_spd(a: &SymMatrix) -> Result<f64> {
    let chol = cholesky(a)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Solves A X = B for symmetric positive definite A.
pub fn spd_solve(a: &SymMatrix, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.dim() != b.nrows() {
        return Err(EnvError::DimensionError(format!(
            "A is {0}x{0} but B has {1} rows",
            a.dim(),
            b.nrows()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let inv = cholesky(a)?.inverse();
    SymMatrix::new(inv)
}

/// Householder QR of the columns of `g`, returning the full p x p orthogonal
/// factor. Its first k columns span span(g).
fn householder_complete_q(g: &DMatrix<f64>) -> DMatrix<f64> {
    let p = g.nrows();
    let k = g.ncols();
    let mut r = g.clone();
    // reflectors stored as (column index, vector)
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let col_norm = r.view((j, j), (p - j, 1)).norm();
        if col_norm < 1e-300 {
            reflectors.push(DVector::zeros(p - j));
            continue;
        }
        let mut v = DVector::from_iterator(p - j, r.view((j, j), (p - j, 1)).iter().copied());
        let alpha = if v[0] >= 0.0 { -col_norm } else { col_norm };
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm > 1e-300 {
            v /= vnorm;
            // apply H = I - 2vv' to remaining columns of r
            for c in j..k {
                let mut col = DVector::from_iterator(p - j, r.view((j, c), (p - j, 1)).iter().copied());
                let dot = v.dot(&col);
                col -= &v * (2.0 * dot);
                for i in 0..(p - j) {
                    r[(j + i, c)] = col[i];
                }
            }
        }
        reflectors.push(v);
    }
    // accumulate Q = H_0 H_1 ... H_{k-1} applied to identity
    let mut q = DMatrix::identity(p, p);
    for j in (0..k).rev() {
        let v = &reflectors[j];
        if v.norm() < 1e-300 {
            continue;
        }
        for c in 0..p {
            let mut col = DVector::from_iterator(p - j, q.view((j, c), (p - j, 1)).iter().copied());
            let dot = v.dot(&col);
            col -= v * (2.0 * dot);
            for i in 0..(p - j) {
                q[(j + i, c)] = col[i];
            }
        }
    }
    q
}

/// Orthonormal basis for the orthogonal complement of span(g).
pub fn orthonormal_complement(g: &SemiOrthoBasis) -> Result<SemiOrthoBasis> {
    let p = g.rows();
    let k = g.cols();
    if k >= p {
        return Err(EnvError::DimensionError(format!(
            "complement undefined for k = {k} >= p = {p}"
        )));
    }
    let q = householder_complete_q(g.as_matrix());
    Ok(SemiOrthoBasis::new_unchecked(q.columns(k, p - k).into()))
}

/// Largest principal angle (radians) between the column spans of two bases of
/// equal shape. Zero iff the spans coincide.
pub fn subspace_angle(g1: &SemiOrthoBasis, g2: &SemiOrthoBasis) -> Result<f64> {
    if g1.rows() != g2.rows() || g1.cols() != g2.cols() {
        return Err(EnvError::DimensionError(format!(
            "bases are {}x{} and {}x{}",
            g1.rows(),
            g1.cols(),
            g2.rows(),
            g2.cols()
        )));
    }
    let cross = g1.as_matrix().transpose() * g2.as_matrix();
    let svals = cross.singular_values();
    let smin = svals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(smin.clamp(-1.0, 1.0).acos())
}
