//! Binary soft-margin SVM over a precomputed kernel, trained with SMO.
//!
//! The dual is solved in the minimization form
//!
//! ```text
//! min_α ½ αᵀQα − 1ᵀα,   Q_ij = y_i y_j K_ij,   0 ≤ α_i ≤ C,   yᵀα = 0
//! ```
//!
//! Each step picks the maximal violating pair `(i, j)` and solves the
//! two-variable subproblem in closed form. Training stops when the
//! violation gap `max_{I_up} −y G − min_{I_low} −y G` falls below the KKT
//! tolerance, which bounds `|y_i f(x_i) − 1|` for every free vector by the
//! same tolerance once the bias is the average over free vectors.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, KernelConfig};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    pub kkt_tolerance: f64,
    /// Upper bound on pair updates.
    pub max_passes: usize,
    /// Seeds the tie-breaking order among equally violating indices.
    pub seed: u64,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-3,
            max_passes: 100_000,
            seed: 0,
        }
    }
}

/// Trained dual solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub labels: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub c_param: f64,
    pub kernel_config: KernelConfig,
    /// Dual objective `1ᵀα − ½ αᵀQα` at the returned iterate.
    pub dual_objective: f64,
    pub iterations: usize,
    /// `false` when `max_passes` was hit before the KKT gap closed.
    pub converged: bool,
}

impl SvmModel {
    /// `Σ_i α_i y_i K(t, x_i) + b` for each row `t` of `kernel_rows`
    /// (columns are training indices).
    pub fn decision_values(&self, kernel_rows: &DMatrix<f64>) -> Result<Vec<f64>> {
        if kernel_rows.ncols() != self.alphas.len() {
            return Err(Error::DimensionMismatch {
                expected: self.alphas.len(),
                found: kernel_rows.ncols(),
            });
        }
        Ok((0..kernel_rows.nrows())
            .map(|r| {
                self.support_indices
                    .iter()
                    .map(|&i| self.alphas[i] * self.labels[i] * kernel_rows[(r, i)])
                    .sum::<f64>()
                    + self.bias
            })
            .collect())
    }

    /// `Σ α_i y_i`, zero at any feasible point.
    pub fn equality_residual(&self) -> f64 {
        self.alphas.iter().zip(&self.labels).map(|(a, y)| a * y).sum()
    }
}

/// Labels (`±1`) and decision values.
pub fn predict(model: &SvmModel, kernel_rows: &DMatrix<f64>) -> Result<(Vec<i32>, Vec<f64>)> {
    let values = model.decision_values(kernel_rows)?;
    let labels = values.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
    Ok((labels, values))
}

fn validate_labels(labels: &[i32]) -> Result<Vec<f64>> {
    let mut pos = false;
    let mut neg = false;
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        match l {
            1 => pos = true,
            -1 => neg = true,
            other => return Err(Error::InvalidLabel(other as f64)),
        }
        out.push(l as f64);
    }
    if !(pos && neg) {
        return Err(Error::SingleClass);
    }
    Ok(out)
}

/// SMO training. Objective values after every update are pushed to `trace`
/// when given.
pub fn train_traced(
    gram: &GramMatrix,
    labels: &[i32],
    c: f64,
    config: &SmoConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SvmModel> {
    let n = gram.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
    }
    if !(config.kkt_tolerance > 0.0) {
        return Err(Error::InvalidConfig("kkt_tolerance must be > 0".into()));
    }
    let y = validate_labels(labels)?;
    let k = &gram.entries;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let mut alpha = vec![0.0; n];
    // G = Qα − 1
    let mut grad = vec![-1.0; n];
    let objective = |alpha: &[f64], grad: &[f64]| -> f64 {
        // −(½αᵀQα − 1ᵀα) = −½ αᵀ(G − 1)
        -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
    };

    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_passes {
        let mut i = None;
        let mut g_max = f64::NEG_INFINITY;
        for &t in &order {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > g_max {
                    g_max = v;
                    i = Some(t);
                }
            }
        }
        let mut g_min = f64::INFINITY;
        for &t in &order {
            if in_low(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v < g_min {
                    g_min = v;
                }
            }
        }
        let Some(i) = i else {
            converged = true;
            break;
        };
        if g_max - g_min < config.kkt_tolerance {
            converged = true;
            break;
        }

        // second index: largest objective decrease among violators
        let mut j = None;
        let mut best = f64::INFINITY;
        for &t in &order {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let b = g_max + y[t] * grad[t];
            if b > 0.0 {
                let a = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
                let a = if a <= 0.0 { TAU } else { a };
                let gain = -(b * b) / a;
                if gain < best {
                    best = gain;
                    j = Some(t);
                }
            }
        }
        let Some(j) = j else {
            converged = true;
            break;
        };

        update_pair(k, &y, c, i, j, &mut alpha, &mut grad);
        iterations += 1;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(objective(&alpha, &grad));
        }
    }
    if !converged {
        log::warn!("SMO hit max_passes={} before closing the KKT gap", config.max_passes);
    }

    let bias = compute_bias(&alpha, &y, &grad, c);
    let support_indices = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        dual_objective: objective(&alpha, &grad),
        alphas: alpha,
        bias,
        labels: y,
        support_indices,
        c_param: c,
        kernel_config: gram.config,
        iterations,
        converged,
    })
}

pub fn train(gram: &GramMatrix, labels: &[i32], c: f64, config: &SmoConfig) -> Result<SvmModel> {
    train_traced(gram, labels, c, config, None)
}

/// Two-variable subproblem, clipped to the box.
fn update_pair(k: &DMatrix<f64>, y: &[f64], c: f64, i: usize, j: usize, alpha: &mut [f64], grad: &mut [f64]) {
    let (old_i, old_j) = (alpha[i], alpha[j]);
    let quad = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
    let quad = if quad <= 0.0 { TAU } else { quad };

    if y[i] != y[j] {
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }

    let di = alpha[i] - old_i;
    let dj = alpha[j] - old_j;
    for t in 0..grad.len() {
        grad[t] += y[t] * (y[i] * k[(t, i)] * di + y[j] * k[(t, j)] * dj);
    }
}

/// Average of `−y G` over free vectors, else the midpoint of the feasible interval.
fn compute_bias(alpha: &[f64], y: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    -rho
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_gram(xs: &[f64]) -> GramMatrix {
        let n = xs.len();
        GramMatrix {
            entries: DMatrix::from_fn(n, n, |i, j| xs[i] * xs[j]),
            config: KernelConfig::default(),
        }
    }

    #[test]
    fn separable_toy() {
        let xs = [-2.0, -1.0, 1.0, 2.0];
        let y = [-1, -1, 1, 1];
        let g = linear_gram(&xs);
        let cfg = SmoConfig { kkt_tolerance: 1e-6, ..SmoConfig::default() };
        let m = train(&g, &y, 1.0, &cfg).unwrap();
        assert!(m.converged);
        let (pred, values) = predict(&m, &g.entries).unwrap();
        assert_eq!(pred, y);
        // w = 1, b = 0: decision at ±1 is ±1
        for (&v, &x) in values.iter().zip(&xs) {
            assert!((v - x).abs() < 1e-5, "{v} vs {x}");
        }
        assert!(m.equality_residual().abs() <= 1e-6);
        let probe = DMatrix::from_fn(2, 4, |r, c| [-0.5, 0.5][r] * xs[c]);
        assert_eq!(predict(&m, &probe).unwrap().0, vec![-1, 1]);
    }

    #[test]
    fn free_support_vector_sits_on_margin() {
        let xs = [-3.0, -1.0, 0.5, 1.5, 2.0, -0.2];
        let y = [-1, -1, 1, 1, 1, 1];
        let g = linear_gram(&xs);
        let cfg = SmoConfig { kkt_tolerance: 1e-4, ..SmoConfig::default() };
        let m = train(&g, &y, 10.0, &cfg).unwrap();
        let values = m.decision_values(&g.entries).unwrap();
        for t in 0..xs.len() {
            if m.alphas[t] > 0.0 && m.alphas[t] < m.c_param {
                assert!((y[t] as f64 * values[t] - 1.0).abs() <= cfg.kkt_tolerance);
            }
        }
    }

    #[test]
    fn conflicting_duplicates_hit_the_box() {
        let xs = [1.0, 1.0, -1.0];
        let y = [1, -1, -1];
        let m = train(&linear_gram(&xs), &y, 1.0, &SmoConfig::default()).unwrap();
        assert!(m.alphas.iter().any(|&a| (a - 1.0).abs() < 1e-12));
        assert!(m.alphas.iter().all(|&a| (-1e-9..=1.0 + 1e-9).contains(&a)));
    }

    #[test]
    fn zero_row_predicts_sign_of_bias() {
        let g = linear_gram(&[-2.0, -1.0, 1.0, 3.0]);
        let mut m = train(&g, &[-1, -1, 1, 1], 1.0, &SmoConfig::default()).unwrap();
        m.bias = -0.25;
        let (l, v) = predict(&m, &DMatrix::zeros(1, 4)).unwrap();
        assert_eq!((l[0], v[0]), (-1, -0.25));
        m.bias = 0.0;
        assert_eq!(predict(&m, &DMatrix::zeros(1, 4)).unwrap().0, vec![1]);
    }

    #[test]
    fn error_paths() {
        let g = linear_gram(&[1.0, 2.0]);
        assert!(matches!(train(&g, &[1, 1], 1.0, &SmoConfig::default()), Err(Error::SingleClass)));
        assert!(matches!(train(&g, &[1, 0], 1.0, &SmoConfig::default()), Err(Error::InvalidLabel(_))));
        assert!(train(&g, &[1, -1], 0.0, &SmoConfig::default()).is_err());
        let m = train(&g, &[1, -1], 1.0, &SmoConfig::default()).unwrap();
        assert!(matches!(predict(&m, &DMatrix::zeros(1, 3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn objective_increases_and_is_deterministic() {
        let xs: Vec<f64> = (0..30).map(|i| ((i * 7919) % 31) as f64 / 5.0 - 3.0).collect();
        let y: Vec<i32> = xs.iter().enumerate().map(|(i, &x)| if x + 0.3 * ((i % 3) as f64 - 1.0) > 0.0 { 1 } else { -1 }).collect();
        let g = linear_gram(&xs);
        let cfg = SmoConfig { seed: 7, ..SmoConfig::default() };
        let mut trace = Vec::new();
        let m = train_traced(&g, &y, 0.5, &cfg, Some(&mut trace)).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        let again = train(&g, &y, 0.5, &cfg).unwrap();
        assert_eq!(m, again);
    }
}
