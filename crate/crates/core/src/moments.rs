//! Mean and covariance estimation for incomplete data.
//!
//! Two estimators are provided:
//!
//! * [`available_case_moments`]: per-coordinate means and pairwise
//!   covariances over whichever records observe the pair, with the unbiased
//!   `/(n-1)` denominator. The pairwise matrix need not be PSD, so it is
//!   repaired by clipping eigenvalues at the ridge.
//! * [`em_moments`]: expectation-maximization for a multivariate normal,
//!   using the maximum-likelihood `/n` convention and adding `ridge·I` in
//!   every M-step.
//!
//! With a positive ridge the EM iteration maximizes the penalized objective
//! `ℓ(m, Σ) − ½·n·ridge·tr(Σ⁻¹)`, which is what [`EmFit::log_likelihood`]
//! records; for `ridge = 0` it is the plain observed-data log-likelihood.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{clip_eigenvalues, from_rows, min_eigenvalue, select, select_vec, symmetrize, to_rows};
use crate::subspace::Dataset;

/// Relative ridge used when callers do not supply one.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    AvailableCase,
    Em,
    Exact,
}

/// Mean vector and SPD covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentsFile", into = "MomentsFile")]
pub struct Moments {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    source: MomentSource,
    ridge: f64,
    sparse_pairs: Vec<(usize, usize)>,
}

impl Moments {
    /// Validates symmetry and positive definiteness.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, source: MomentSource) -> Result<Self> {
        let n = mean.len();
        if covariance.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: covariance.nrows(),
            });
        }
        if (&covariance - covariance.transpose()).amax() > 1e-10 {
            return Err(Error::SingularCovariance);
        }
        let floor = if n == 0 { 0.0 } else { min_eigenvalue(&covariance) };
        if n > 0 && floor <= 0.0 {
            return Err(Error::SingularCovariance);
        }
        Ok(Self {
            mean,
            covariance: symmetrize(&covariance),
            source,
            ridge: floor.max(0.0),
            sparse_pairs: Vec::new(),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn source(&self) -> MomentSource {
        self.source
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Coordinate pairs with fewer than two joint observations; their
    /// covariance entry was set to zero.
    pub fn sparse_pairs(&self) -> &[(usize, usize)] {
        &self.sparse_pairs
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(self.covariance.clone()).ok_or(Error::SingularCovariance)
    }
}

#[derive(Serialize, Deserialize)]
struct MomentsFile {
    source: MomentSource,
    ridge: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sparse_pairs: Vec<(usize, usize)>,
}

impl From<Moments> for MomentsFile {
    fn from(m: Moments) -> Self {
        Self {
            source: m.source,
            ridge: m.ridge,
            mean: m.mean.iter().copied().collect(),
            covariance: to_rows(&m.covariance),
            sparse_pairs: m.sparse_pairs,
        }
    }
}

impl TryFrom<MomentsFile> for Moments {
    type Error = Error;

    fn try_from(f: MomentsFile) -> Result<Self> {
        let n = f.mean.len();
        let cov = from_rows(&f.covariance, n)
            .filter(|c| c.nrows() == n)
            .ok_or(Error::DimensionMismatch {
                expected: n,
                found: f.covariance.len(),
            })?;
        let mut m = Moments::new(DVector::from_vec(f.mean), cov, f.source)?;
        m.ridge = f.ridge;
        m.sparse_pairs = f.sparse_pairs;
        Ok(m)
    }
}

/// EM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once the objective improves by less than this.
    pub tolerance: f64,
    /// Added to the covariance diagonal in every M-step.
    pub ridge: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-7,
            ridge: 1e-6,
        }
    }
}

impl EmConfig {
    /// Default settings with the ridge scaled to the data.
    pub fn for_data(data: &Dataset) -> Self {
        Self {
            ridge: default_ridge(data),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("EM max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("EM tolerance must be > 0".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidConfig("ridge must be >= 0".into()));
        }
        Ok(())
    }
}

/// `1e-6 ×` the mean available-case variance (falls back to `1e-6`).
pub fn default_ridge(data: &Dataset) -> f64 {
    let n = data.dimension();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let obs: Vec<f64> = data.records().iter().filter_map(|r| r.value(i)).collect();
        if obs.len() < 2 {
            continue;
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
        total += var;
        count += 1;
    }
    let scale = if count == 0 { 0.0 } else { total / count as f64 };
    if scale > 0.0 {
        DEFAULT_RELATIVE_RIDGE * scale
    } else {
        DEFAULT_RELATIVE_RIDGE
    }
}

fn check_observed(data: &Dataset) -> Result<()> {
    for i in 0..data.dimension() {
        if !data.records().iter().any(|r| r.is_observed(i)) {
            return Err(Error::CoordinateNeverObserved(i));
        }
    }
    Ok(())
}

/// Available-case (pairwise-deletion) moments, PSD-repaired to `min eig >= ridge`.
pub fn available_case_moments(data: &Dataset, ridge: f64) -> Result<Moments> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig("ridge must be >= 0".into()));
    }
    check_observed(data)?;
    let n = data.dimension();
    let records = data.records();

    let mean = DVector::from_fn(n, |i, _| {
        let (sum, count) = records
            .iter()
            .filter_map(|r| r.value(i))
            .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
        sum / count as f64
    });

    let mut cov = DMatrix::zeros(n, n);
    let mut sparse_pairs = Vec::new();
    for i in 0..n {
        for j in i..n {
            let pairs: Vec<(f64, f64)> = records
                .iter()
                .filter_map(|r| Some((r.value(i)?, r.value(j)?)))
                .collect();
            if pairs.len() < 2 {
                log::warn!("coordinates ({i}, {j}) have {} joint observations; covariance set to 0", pairs.len());
                sparse_pairs.push((i, j));
                continue;
            }
            let k = pairs.len() as f64;
            let mi = pairs.iter().map(|p| p.0).sum::<f64>() / k;
            let mj = pairs.iter().map(|p| p.1).sum::<f64>() / k;
            let c = pairs.iter().map(|p| (p.0 - mi) * (p.1 - mj)).sum::<f64>() / (k - 1.0);
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }

    let covariance = if n == 0 { cov } else { clip_eigenvalues(&cov, ridge) };
    if n > 0 {
        // Only reachable with ridge = 0 on rank-deficient data.
        let scale = covariance.diagonal().amax();
        if min_eigenvalue(&covariance) <= scale * f64::EPSILON * n as f64 {
            return Err(Error::SingularCovariance);
        }
    }
    Ok(Moments {
        mean,
        covariance,
        source: MomentSource::AvailableCase,
        ridge,
        sparse_pairs,
    })
}

/// Result of an EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub moments: Moments,
    /// Objective at the initial parameters and after every M-step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// EM estimate of the normal mean and covariance.
pub fn em_moments(data: &Dataset, config: &EmConfig) -> Result<Moments> {
    em_fit(data, config).map(|f| f.moments)
}

/// Expected sufficient statistics from one E-step.
struct Sufficient {
    sum: DVector<f64>,
    outer: DMatrix<f64>,
    objective: f64,
}

fn e_step(data: &Dataset, mean: &DVector<f64>, cov: &DMatrix<f64>, ridge: f64) -> Result<Sufficient> {
    let n = data.dimension();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut sum = DVector::zeros(n);
    let mut outer = DMatrix::zeros(n, n);
    let mut objective = 0.0;

    for (idx, r) in data.records().iter().enumerate() {
        let obs = r.observed_indices();
        let mis = r.missing_indices();
        let x = r.filled_with(|_| 0.0);
        let mut xhat = x.clone();
        let mut cond_cov: Option<DMatrix<f64>> = None;

        if obs.is_empty() {
            xhat.copy_from(mean);
            cond_cov = Some(cov.clone());
        } else {
            let s_oo = select(cov, &obs, &obs);
            let chol = Cholesky::new(s_oo).ok_or(Error::SingularConditioning { record: idx })?;
            let resid = select_vec(&x, &obs) - select_vec(mean, &obs);
            let lower = chol.l();
            let z = lower
                .solve_lower_triangular(&resid)
                .ok_or(Error::SingularConditioning { record: idx })?;
            let log_det: f64 = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            objective -= 0.5 * (obs.len() as f64 * ln_2pi + log_det + z.norm_squared());

            if !mis.is_empty() {
                let s_om = select(cov, &obs, &mis);
                let gain = chol.solve(&s_om);
                let cond_mean = select_vec(mean, &mis) + gain.transpose() * &resid;
                for (k, &j) in mis.iter().enumerate() {
                    xhat[j] = cond_mean[k];
                }
                let s_mm = select(cov, &mis, &mis);
                let c = s_mm - s_om.transpose() * gain;
                let mut full = DMatrix::zeros(n, n);
                for (a, &ja) in mis.iter().enumerate() {
                    for (b, &jb) in mis.iter().enumerate() {
                        full[(ja, jb)] = c[(a, b)];
                    }
                }
                cond_cov = Some(full);
            }
        }

        sum += &xhat;
        outer.ger(1.0, &xhat, &xhat, 1.0);
        if let Some(c) = cond_cov {
            outer += c;
        }
    }

    if ridge > 0.0 {
        let chol = Cholesky::new(cov.clone()).ok_or(Error::SingularCovariance)?;
        let trace_inv = chol.inverse().trace();
        objective -= 0.5 * data.len() as f64 * ridge * trace_inv;
    }

    Ok(Sufficient {
        sum,
        outer,
        objective,
    })
}

fn m_step(stats: &Sufficient, count: usize, ridge: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = stats.sum.len();
    let k = count as f64;
    let mean = &stats.sum / k;
    let mut cov = &stats.outer / k - &mean * mean.transpose();
    cov = symmetrize(&cov);
    for i in 0..n {
        cov[(i, i)] += ridge;
    }
    (mean, cov)
}

/// EM with the full objective trace.
pub fn em_fit(data: &Dataset, config: &EmConfig) -> Result<EmFit> {
    config.validate()?;
    if data.dimension() == 0 || data.is_empty() {
        return Err(Error::InvalidConfig("EM requires a non-empty dataset with N >= 1".into()));
    }
    check_observed(data)?;

    let init_ridge = config.ridge.max(default_ridge(data));
    let init = available_case_moments(data, init_ridge)?;
    let mut mean = init.mean;
    let mut cov = init.covariance;
    let complete = data.is_complete();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let stats = e_step(data, &mean, &cov, config.ridge)?;
        if let Some(&prev) = history.last() {
            let gain = stats.objective - prev;
            history.push(stats.objective);
            if gain < config.tolerance || (complete && iterations >= 1) {
                converged = true;
                break;
            }
        } else {
            history.push(stats.objective);
        }
        if iterations >= config.max_iterations {
            break;
        }
        let (m, c) = m_step(&stats, data.len(), config.ridge);
        mean = m;
        cov = c;
        iterations += 1;
    }
    if !converged {
        log::warn!("EM stopped after {iterations} iterations without converging");
    }

    let ridge = if config.ridge > 0.0 { config.ridge } else { min_eigenvalue(&cov).max(0.0) };
    Ok(EmFit {
        moments: Moments {
            mean,
            covariance: cov,
            source: MomentSource::Em,
            ridge,
            sparse_pairs: Vec::new(),
        },
        log_likelihood: history,
        iterations,
        converged,
    })
}
