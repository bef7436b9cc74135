//! Deterministic parallel nonparametric pairs bootstrap. Each replicate draws
//! its indices from a counter-based substream keyed by (seed, replicate
//! index), so results are bit-identical regardless of worker count.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::criteria::{
    compute_weights, criterion_1d, criterion_fg, select_dimension, weighted_estimator,
    CandidateRange, CriterionVector, WeightVector,
};
use crate::error::{EnvError, Result};
use crate::glm::{fit_glm_mle, moments, Dataset, GlmFit};
use crate::objectives::MomentPair;
use crate::optim::SolverOptions;
use crate::path::{fit_1d_path, fit_fg_path, project_estimator, EnvelopePath, PathMethod};

/// Test hook: `Identity` replays the original rows instead of resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMode {
    #[default]
    Pairs,
    Identity,
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub b: usize,
    pub seed: u64,
    pub method: PathMethod,
    pub c: f64,
    pub candidate_range: CandidateRange,
    pub workers: Option<usize>,
    pub resample_mode: ResampleMode,
    pub solver: SolverOptions,
}

impl BootstrapConfig {
    pub fn new(b: usize, seed: u64) -> Self {
        Self {
            b,
            seed,
            method: PathMethod::OneD,
            c: 1.0,
            candidate_range: CandidateRange::default(),
            workers: None,
            resample_mode: ResampleMode::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// One full envelope fit on a dataset: MLE, moment pair, solution path,
/// criteria, selected dimension, weights, and the derived estimators.
#[derive(Debug, Clone)]
pub struct EnvelopeEstimate {
    pub glm: GlmFit,
    pub mp: MomentPair,
    pub path: EnvelopePath,
    pub criteria: CriterionVector,
    pub u_hat: usize,
    pub weights: WeightVector,
    /// Weighted estimator theta_w.
    pub theta_w: DVector<f64>,
    /// Envelope estimator at the selected dimension.
    pub theta_u: DVector<f64>,
}

impl EnvelopeEstimate {
    /// Envelope estimator at an arbitrary dimension k (zero vector at k = 0).
    pub fn theta_at(&self, k: usize) -> DVector<f64> {
        if k == 0 {
            DVector::zeros(self.path.dim())
        } else {
            self.path.entry(k).theta_k.clone()
        }
    }
}

/// Fits the GLM, builds moments, fits the path for the requested method, and
/// computes criteria, weights, and estimators.
pub fn fit_envelope(
    ds: &Dataset,
    method: PathMethod,
    c: f64,
    range: CandidateRange,
    opts: &SolverOptions,
) -> Result<EnvelopeEstimate> {
    let glm = fit_glm_mle(ds)?;
    let mp = moments(ds, &glm)?;
    let theta_tilde = glm.coef_vector();
    let oned = fit_1d_path(&mp, &theta_tilde, opts)?;
    let (path, criteria) = match method {
        PathMethod::OneD => {
            let cv = criterion_1d(&oned, ds.n(), c)?;
            (oned, cv)
        }
        PathMethod::Fg => {
            let fg = fit_fg_path(&mp, &theta_tilde, opts, &oned)?;
            let cv = criterion_fg(&fg, ds.n(), c)?;
            (fg, cv)
        }
    };
    let u_hat = select_dimension(&criteria, range);
    let weights = compute_weights(&criteria, range);
    let theta_w = weighted_estimator(&path, &weights)?;
    let theta_u = if u_hat == 0 {
        DVector::zeros(ds.p())
    } else {
        path.entry(u_hat).theta_k.clone()
    };
    Ok(EnvelopeEstimate {
        glm,
        mp,
        path,
        criteria,
        u_hat,
        weights,
        theta_w,
        theta_u,
    })
}

/// Draws n rows i.i.d. uniformly with replacement.
pub fn resample(ds: &Dataset, rng: &mut impl Rng) -> Dataset {
    let n = ds.n();
    let p = ds.p();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let j = rng.random_range(0..n);
        x.row_mut(i).copy_from(&ds.x.row(j));
        y[i] = ds.y[j];
    }
    Dataset {
        x,
        y,
        family: ds.family,
        has_intercept: ds.has_intercept,
    }
}

/// Deviation record of one replicate, centered at the original-sample
/// estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub dev_w: DVector<f64>,
    pub dev_varu: DVector<f64>,
    pub dev_fixu: DVector<f64>,
    pub dev_mle: DVector<f64>,
    pub u_star: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReplicates {
    pub rows: Vec<ReplicateRow>,
    pub skipped: usize,
}

/// Second-moment matrices of the deviations, per-component bootstrap SDs,
/// SD ratios against the MLE, and the distribution of the selected dimension.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub sd_matrix_w: DMatrix<f64>,
    pub sd_matrix_varu: DMatrix<f64>,
    pub sd_matrix_fixu: DMatrix<f64>,
    pub sd_matrix_mle: DMatrix<f64>,
    pub sd_w: Vec<f64>,
    pub sd_varu: Vec<f64>,
    pub sd_fixu: Vec<f64>,
    pub sd_mle: Vec<f64>,
    /// Per component: sd(MLE)/sd(envelope); None where the envelope SD is 0.
    pub ratio_w: Vec<Option<f64>>,
    pub ratio_varu: Vec<Option<f64>>,
    pub ratio_fixu: Vec<Option<f64>>,
    /// Relative frequency of each selected dimension over non-skipped
    /// replicates, indexed 0..=p.
    pub u_distribution: Vec<f64>,
    pub replicates_used: usize,
    pub skipped: usize,
}

const MAX_RETRIES: u64 = 10;
const RETRY_STREAM_STRIDE: u64 = 16;

fn replicate_once(
    ds: &Dataset,
    cfg: &BootstrapConfig,
    original: &EnvelopeEstimate,
    index: usize,
) -> Option<ReplicateRow> {
    for attempt in 0..MAX_RETRIES {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64 * RETRY_STREAM_STRIDE + attempt);
        let sample = match cfg.resample_mode {
            ResampleMode::Pairs => resample(ds, &mut rng),
            ResampleMode::Identity => ds.clone(),
        };
        let est = match fit_envelope(&sample, cfg.method, cfg.c, cfg.candidate_range, &cfg.solver)
        {
            Ok(e) => e,
            Err(_) => continue,
        };
        // fixed-u estimator: replicate path read at the ORIGINAL dimension
        let fixu = if original.u_hat == 0 {
            DVector::zeros(ds.p())
        } else {
            match project_estimator(
                &est.path.entry(original.u_hat).basis,
                &est.glm.coef_vector(),
            ) {
                Ok(v) => v,
                Err(_) => continue,
            }
        };
        return Some(ReplicateRow {
            dev_w: &original.theta_w - &est.theta_w,
            dev_varu: &original.theta_u - &est.theta_u,
            dev_fixu: &original.theta_u - fixu,
            dev_mle: original.glm.coef_vector() - est.glm.coef_vector(),
            u_star: est.u_hat,
        });
    }
    None
}

/// Runs the full bootstrap. Failing replicates (separation, non-PD moments)
/// are retried on fresh substreams up to 10 times, then skipped.
pub fn run_bootstrap(ds: &Dataset, cfg: &BootstrapConfig) -> Result<BootstrapReplicates> {
    let original = fit_envelope(ds, cfg.method, cfg.c, cfg.candidate_range, &cfg.solver)?;
    run_bootstrap_from(ds, cfg, &original)
}

/// Bootstrap with the original-sample fit already in hand.
pub fn run_bootstrap_from(
    ds: &Dataset,
    cfg: &BootstrapConfig,
    original: &EnvelopeEstimate,
) -> Result<BootstrapReplicates> {
    let body = || -> Vec<Option<ReplicateRow>> {
        (0..cfg.b)
            .into_par_iter()
            .map(|i| replicate_once(ds, cfg, original, i))
            .collect()
    };
    let results = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .expect("thread pool")
            .install(body),
        None => body(),
    };
    let mut rows = Vec::with_capacity(cfg.b);
    let mut skipped = 0usize;
    for r in results {
        match r {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    if skipped * 20 > cfg.b {
        return Err(EnvError::TooManyFailures {
            skipped,
            total: cfg.b,
        });
    }
    Ok(BootstrapReplicates { rows, skipped })
}

fn second_moment(rows: &[ReplicateRow], pick: impl Fn(&ReplicateRow) -> &DVector<f64>) -> DMatrix<f64> {
    let p = pick(&rows[0]).len();
    let r = rows.len() as f64;
    let mut acc = DMatrix::zeros(p, p);
    for row in rows {
        let d = pick(row);
        acc += d * d.transpose();
    }
    acc / r
}

/// Summarizes deviation records. Deviations are already centered at the
/// original estimates; no replicate-mean centering happens here.
pub fn summarize(reps: &BootstrapReplicates, p: usize) -> BootstrapSummary {
    let rows = &reps.rows;
    let used = rows.len();
    assert!(used >= 1, "summarize needs at least one replicate");

    let m_w = second_moment(rows, |r| &r.dev_w);
    let m_varu = second_moment(rows, |r| &r.dev_varu);
    let m_fixu = second_moment(rows, |r| &r.dev_fixu);
    let m_mle = second_moment(rows, |r| &r.dev_mle);

    let diag_sd = |m: &DMatrix<f64>| -> Vec<f64> {
        (0..p).map(|i| m[(i, i)].sqrt()).collect()
    };
    let sd_w = diag_sd(&m_w);
    let sd_varu = diag_sd(&m_varu);
    let sd_fixu = diag_sd(&m_fixu);
    let sd_mle = diag_sd(&m_mle);

    let ratio = |env: &[f64]| -> Vec<Option<f64>> {
        sd_mle
            .iter()
            .zip(env.iter())
            .map(|(m, e)| if *e > 0.0 { Some(m / e) } else { None })
            .collect()
    };
    let ratio_w = ratio(&sd_w);
    let ratio_varu = ratio(&sd_varu);
    let ratio_fixu = ratio(&sd_fixu);

    let mut u_distribution = vec![0.0; p + 1];
    for row in rows {
        u_distribution[row.u_star] += 1.0;
    }
    for f in &mut u_distribution {
        *f /= used as f64;
    }

    BootstrapSummary {
        sd_matrix_w: m_w,
        sd_matrix_varu: m_varu,
        sd_matrix_fixu: m_fixu,
        sd_matrix_mle: m_mle,
        sd_w,
        sd_varu,
        sd_fixu,
        sd_mle,
        ratio_w,
        ratio_varu,
        ratio_fixu,
        u_distribution,
        replicates_used: used,
        skipped: reps.skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::Family;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_logistic(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let p = 3;
        let mut x = DMatrix::zeros(n, p);
        let mut y = DVector::zeros(n);
        for i in 0..n {
            for j in 0..p {
                x[(i, j)] = StandardNormal.sample(&mut rng);
            }
            let t: f64 = 1.2 * x[(i, 0)] - 0.5 * x[(i, 1)];
            let prob = 1.0 / (1.0 + (-t).exp());
            y[i] = if rng.random::<f64>() < prob { 1.0 } else { 0.0 };
        }
        Dataset::new(x, y, Family::Logistic, false).unwrap()
    }

    #[test]
    fn resample_single_row() {
        let x = DMatrix::from_row_slice(1, 1, &[2.5]);
        let y = DVector::from_column_slice(&[1.5]);
        let ds = Dataset {
            x,
            y,
            family: Family::Linear,
            has_intercept: false,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let r = resample(&ds, &mut rng);
        assert_eq!(r.x[(0, 0)], 2.5);
        assert_eq!(r.y[0], 1.5);
    }

    #[test]
    fn resample_deterministic_given_seed() {
        let ds = toy_logistic(50, 1);
        let mut r1 = ChaCha12Rng::seed_from_u64(99);
        let mut r2 = ChaCha12Rng::seed_from_u64(99);
        let a = resample(&ds, &mut r1);
        let b = resample(&ds, &mut r2);
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn resample_distinct_fraction() {
        // expected distinct fraction ~ 1 - 1/e for n = 1000
        let n = 1000;
        let mut total = 0.0;
        for stream in 0..100u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(7);
            rng.set_stream(stream);
            let mut seen = vec![false; n];
            for _ in 0..n {
                seen[rng.random_range(0..n)] = true;
            }
            total += seen.iter().filter(|s| **s).count() as f64 / n as f64;
        }
        let mean = total / 100.0;
        assert!(
            (mean - (1.0 - (-1.0f64).exp())).abs() < 0.02,
            "distinct fraction {mean}"
        );
    }

    #[test]
    fn identity_resampling_gives_zero_deviations() {
        let ds = toy_logistic(80, 3);
        let mut cfg = BootstrapConfig::new(3, 11);
        cfg.resample_mode = ResampleMode::Identity;
        let reps = run_bootstrap(&ds, &cfg).unwrap();
        assert_eq!(reps.rows.len(), 3);
        let u0 = reps.rows[0].u_star;
        for row in &reps.rows {
            assert_eq!(row.dev_w.norm(), 0.0);
            assert_eq!(row.dev_varu.norm(), 0.0);
            assert_eq!(row.dev_fixu.norm(), 0.0);
            assert_eq!(row.dev_mle.norm(), 0.0);
            assert_eq!(row.u_star, u0);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let ds = toy_logistic(100, 4);
        let mut cfg1 = BootstrapConfig::new(20, 13);
        cfg1.workers = Some(1);
        let mut cfg8 = cfg1.clone();
        cfg8.workers = Some(8);
        let r1 = run_bootstrap(&ds, &cfg1).unwrap();
        let r8 = run_bootstrap(&ds, &cfg8).unwrap();
        assert_eq!(r1, r8);
    }

    #[test]
    fn summary_sd_of_symmetric_deviations() {
        let d = DVector::from_column_slice(&[0.3, -0.7]);
        let rows = vec![
            ReplicateRow {
                dev_w: d.clone(),
                dev_varu: d.clone(),
                dev_fixu: d.clone(),
                dev_mle: d.clone(),
                u_star: 1,
            },
            ReplicateRow {
                dev_w: -&d,
                dev_varu: -&d,
                dev_fixu: -&d,
                dev_mle: -&d,
                u_star: 2,
            },
        ];
        let reps = BootstrapReplicates { rows, skipped: 0 };
        let s = summarize(&reps, 2);
        assert_abs_diff_eq!(s.sd_w[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sd_w[1], 0.7, epsilon = 1e-15);
        // equal SD columns -> ratios 1
        assert_abs_diff_eq!(s.ratio_w[0].unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.u_distribution[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.u_distribution[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn summary_zero_deviations_guarded() {
        let z = DVector::zeros(2);
        let rows = vec![ReplicateRow {
            dev_w: z.clone(),
            dev_varu: z.clone(),
            dev_fixu: z.clone(),
            dev_mle: z.clone(),
            u_star: 1,
        }];
        let reps = BootstrapReplicates { rows, skipped: 0 };
        let s = summarize(&reps, 2);
        assert_eq!(s.sd_w[0], 0.0);
        assert!(s.ratio_w[0].is_none());
    }
}
