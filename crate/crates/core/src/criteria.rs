//! Information criteria over candidate dimensions, softmax weights, dimension
//! selection, and the weighted envelope estimator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};
use crate::path::{EnvelopePath, PathMethod};

/// Which dimensions participate in weighting. The default 1..p reproduces the
/// reference numeric outputs; 0..p additionally weights the zero estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CandidateRange {
    ZeroToP,
    #[default]
    OneToP,
}

impl CandidateRange {
    pub fn start(&self) -> usize {
        match self {
            CandidateRange::ZeroToP => 0,
            CandidateRange::OneToP => 1,
        }
    }
}

/// Criterion values I_n(k) for k = 0..p. values[0] = 0 by convention.
#[derive(Debug, Clone)]
pub struct CriterionVector {
    pub values: Vec<f64>,
    pub n: usize,
    pub c: f64,
    pub method: PathMethod,
}

/// Normalized nonnegative weights over the candidate range.
#[derive(Debug, Clone)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub candidate_range: CandidateRange,
}

impl WeightVector {
    /// Weight attached to dimension k, zero outside the candidate range.
    pub fn weight_at(&self, k: usize) -> f64 {
        let start = self.candidate_range.start();
        if k < start {
            0.0
        } else {
            self.weights[k - start]
        }
    }
}

fn check_penalty(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(EnvError::InvalidPenalty(c))
    }
}

/// I_n(k) = J_n(basis_k) + C k log(n)/n with I_n(0) = 0.
pub fn criterion_fg(path: &EnvelopePath, n: usize, c: f64) -> Result<CriterionVector> {
    check_penalty(c)?;
    let p = path.dim();
    let logn_n = (n as f64).ln() / n as f64;
    let mut values = Vec::with_capacity(p + 1);
    values.push(0.0);
    for k in 1..=p {
        values.push(path.entry(k).j_value + c * k as f64 * logn_n);
    }
    Ok(CriterionVector {
        values,
        n,
        c,
        method: PathMethod::Fg,
    })
}

/// I_n(k) = sum_{j<=k} (phi_j + C log(n)/n), i.e. total penalty C k log(n)/n.
pub fn criterion_1d(path: &EnvelopePath, n: usize, c: f64) -> Result<CriterionVector> {
    check_penalty(c)?;
    let p = path.dim();
    let logn_n = (n as f64).ln() / n as f64;
    let phis = path
        .entry(p)
        .phi_values
        .as_ref()
        .ok_or_else(|| EnvError::DimensionError("path has no phi values (not a 1D path)".into()))?;
    let mut values = Vec::with_capacity(p + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for phi in phis.iter().take(p) {
        acc += phi + c * logn_n;
        values.push(acc);
    }
    Ok(CriterionVector {
        values,
        n,
        c,
        method: PathMethod::OneD,
    })
}

/// Smallest index attaining the minimum over the candidate range.
pub fn select_dimension(cv: &CriterionVector, range: CandidateRange) -> usize {
    let start = range.start();
    let mut best = start;
    for k in start..cv.values.len() {
        if cv.values[k] < cv.values[best] {
            best = k;
        }
    }
    best
}

/// Softmax weights w_k proportional to exp{-n I_n(k)}, computed stably by
/// subtracting the minimum of n I_n before exponentiation. With `halved` the
/// posterior-style exp{-n I_n(k)/2} variant is used instead.
pub fn compute_weights_with(
    cv: &CriterionVector,
    range: CandidateRange,
    halved: bool,
) -> WeightVector {
    let start = range.start();
    let n = cv.n as f64;
    let scale = if halved { 0.5 } else { 1.0 };
    let scaled: Vec<f64> = cv.values[start..]
        .iter()
        .map(|v| n * v * scale)
        .collect();
    let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = scaled.iter().map(|v| (min - v).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    WeightVector {
        weights,
        candidate_range: range,
    }
}

pub fn compute_weights(cv: &CriterionVector, range: CandidateRange) -> WeightVector {
    compute_weights_with(cv, range, false)
}

/// theta_w = sum_k w_k theta_k with theta_0 = 0.
pub fn weighted_estimator(path: &EnvelopePath, wv: &WeightVector) -> Result<DVector<f64>> {
    let p = path.dim();
    let start = wv.candidate_range.start();
    if wv.weights.len() != p + 1 - start {
        return Err(EnvError::DimensionError(format!(
            "weight vector has {} entries for p = {p} with range starting at {start}",
            wv.weights.len()
        )));
    }
    let mut theta = DVector::zeros(p);
    for k in start.max(1)..=p {
        theta += &path.entry(k).theta_k * wv.weight_at(k);
    }
    Ok(theta)
}
