//! Synthetic attribute removal.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{available_case_moments, default_ridge};
use crate::subspace::{Dataset, IncompleteRecord};

use super::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingnessKind {
    /// Keep the data's own missing cells.
    Asis,
    Random,
    Structural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Missingness {
    pub kind: MissingnessKind,
    pub fraction: f64,
}

impl Default for Missingness {
    fn default() -> Self {
        Self {
            kind: MissingnessKind::Asis,
            fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalStats {
    pub target: f64,
    pub removed_cells: usize,
    pub total_cells: usize,
    /// Records that would have lost every feature and had one restored.
    pub guarded_records: usize,
    /// Structural removal only: fitted rate and the exact expected fraction.
    pub rate: Option<f64>,
    pub expected_fraction: Option<f64>,
}

impl RemovalStats {
    pub fn realized_fraction(&self) -> f64 {
        if self.total_cells == 0 {
            0.0
        } else {
            self.removed_cells as f64 / self.total_cells as f64
        }
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("removal fraction must lie in (0, 1), got {fraction}")));
    }
    Ok(())
}

/// Removes cells with per-cell probability `prob(record, attribute)`, then
/// re-observes one uniformly chosen original feature for any record left
/// empty.
fn remove_with(
    data: &Dataset,
    rng: &mut impl Rng,
    target: f64,
    prob: impl Fn(usize, usize) -> f64,
) -> (Dataset, RemovalStats) {
    let n = data.dimension();
    let mut out = data.clone();
    let mut removed = 0usize;
    let mut guarded = 0usize;
    for (r, rec) in out.records_mut().iter_mut().enumerate() {
        let original: IncompleteRecord = rec.clone();
        for i in 0..n {
            let u: f64 = rng.random();
            if original.is_observed(i) && u < prob(r, i) {
                rec.remove(i);
                removed += 1;
            }
        }
        if rec.observed_count() == 0 && original.observed_count() > 0 {
            let candidates = original.observed_indices();
            let pick = candidates[rng.random_range(0..candidates.len())];
            rec.restore(pick, original.values()[pick]);
            removed -= 1;
            guarded += 1;
        }
    }
    let stats = RemovalStats {
        target,
        removed_cells: removed,
        total_cells: data.len() * n,
        guarded_records: guarded,
        rate: None,
        expected_fraction: None,
    };
    (out, stats)
}

/// Removes every cell independently with probability `fraction`.
pub fn remove_random(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, RemovalStats)> {
    check_fraction(fraction)?;
    let mut rng = stream(seed, &[0x72616e64]);
    Ok(remove_with(data, &mut rng, fraction, |_, _| fraction))
}

/// Anchors, Mahalanobis distances and fitted rate behind a structural removal.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralPlan {
    /// `anchors[i]` is the record governing attribute `i`.
    pub anchors: Vec<usize>,
    /// `distances[r][i] = ‖x_r − x_{anchors[i]}‖_Σ`.
    pub distances: Vec<Vec<f64>>,
    pub rate: f64,
}

impl StructuralPlan {
    pub fn probability(&self, record: usize, attribute: usize) -> f64 {
        (-self.rate * self.distances[record][attribute]).exp()
    }

    pub fn expected_fraction(&self) -> f64 {
        expected_fraction(&self.distances, self.rate)
    }
}

fn plan_with(data: &Dataset, fraction: f64, rng: &mut impl Rng) -> Result<StructuralPlan> {
    check_fraction(fraction)?;
    if !data.is_complete() {
        return Err(Error::InvalidConfig("structural removal requires complete input data".into()));
    }
    let n = data.dimension();
    let m = data.len();
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("structural removal requires a non-empty dataset".into()));
    }

    let anchors: Vec<usize> = if m >= n {
        rand::seq::index::sample(rng, m, n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..m)).collect()
    };

    let moments = available_case_moments(data, default_ridge(data))?;
    let chol = Cholesky::new(moments.covariance().clone()).ok_or(Error::SingularCovariance)?;
    let lower = chol.l();
    let whitened: Vec<DVector<f64>> = data
        .records()
        .iter()
        .map(|r| {
            lower
                .solve_lower_triangular(&DVector::from_column_slice(r.values()))
                .ok_or(Error::SingularCovariance)
        })
        .collect::<Result<_>>()?;
    let distances: Vec<Vec<f64>> = whitened
        .iter()
        .map(|z| anchors.iter().map(|&a| (z - &whitened[a]).norm()).collect())
        .collect();

    let rate = fit_rate(&distances, fraction)?;
    Ok(StructuralPlan {
        anchors,
        distances,
        rate,
    })
}

/// The plan [`remove_structural`] would use for the same arguments.
pub fn plan_structural(data: &Dataset, fraction: f64, seed: u64) -> Result<StructuralPlan> {
    plan_with(data, fraction, &mut stream(seed, &[0x73747275]))
}

/// Geometry-driven removal.
///
/// `N` anchor records are drawn (without replacement when possible); anchor
/// `i` governs attribute `i`. A record `x` loses attribute `i` with
/// probability `exp(−t·‖x − x_i‖_Σ)` under the complete-data Mahalanobis
/// norm, with `t` bisected so the expected removal fraction hits `fraction`.
pub fn remove_structural(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, RemovalStats)> {
    let mut rng = stream(seed, &[0x73747275]);
    let plan = plan_with(data, fraction, &mut rng)?;
    let (out, mut stats) = remove_with(data, &mut rng, fraction, |r, i| plan.probability(r, i));
    stats.rate = Some(plan.rate);
    stats.expected_fraction = Some(plan.expected_fraction());
    Ok((out, stats))
}

/// Mean of `exp(−t·d)` over all cells.
pub fn expected_fraction(distances: &[Vec<f64>], rate: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in distances {
        for &d in row {
            sum += (-rate * d).exp();
            count += 1;
        }
    }
    sum / count as f64
}

/// Finds `t > 0` with `expected_fraction(t)` within `1e-5` of `target`.
pub(crate) fn fit_rate(distances: &[Vec<f64>], target: f64) -> Result<f64> {
    let total: usize = distances.iter().map(Vec::len).sum();
    let zeros: usize = distances.iter().flatten().filter(|&&d| d == 0.0).count();
    let floor = zeros as f64 / total as f64;
    if target <= floor || target >= 1.0 {
        return Err(Error::TargetUnreachable {
            target,
            low: floor,
            high: 1.0,
        });
    }
    let f = |t: f64| expected_fraction(distances, t);

    let mut hi = 1.0;
    let mut tries = 0;
    while f(hi) > target {
        hi *= 2.0;
        tries += 1;
        if tries > 1100 {
            return Err(Error::TargetUnreachable {
                target,
                low: floor,
                high: 1.0,
            });
        }
    }
    let mut lo = hi / 2.0;
    tries = 0;
    while f(lo) <= target {
        lo /= 2.0;
        tries += 1;
        if tries > 1100 {
            return Err(Error::TargetUnreachable {
                target,
                low: floor,
                high: 1.0,
            });
        }
    }
    let mut mid = (lo * hi).sqrt();
    for _ in 0..200 {
        mid = (lo * hi).sqrt();
        let v = f(mid);
        if (v - target).abs() <= 1e-5 {
            break;
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::two_gaussian_blobs;

    fn grid(rows: usize, cols: usize) -> Dataset {
        let recs = (0..rows)
            .map(|r| IncompleteRecord::complete((0..cols).map(|c| ((r * 31 + c * 17) % 23) as f64).collect(), Some(1)))
            .collect();
        Dataset::new(recs, cols).unwrap()
    }

    #[test]
    fn random_fraction_is_close_to_target() {
        let d = grid(200, 50);
        let (out, stats) = remove_random(&d, 0.9, 3).unwrap();
        // count removed cells directly
        let removed = out.records().iter().map(|r| r.dim() - r.observed_count()).sum::<usize>();
        assert_eq!(removed, stats.removed_cells);
        assert!((stats.realized_fraction() - 0.9).abs() <= 0.02, "{}", stats.realized_fraction());
        assert!(out.records().iter().all(|r| r.observed_count() >= 1));
    }

    #[test]
    fn random_is_seed_deterministic() {
        let d = grid(30, 6);
        let (a, _) = remove_random(&d, 0.5, 11).unwrap();
        let (b, _) = remove_random(&d, 0.5, 11).unwrap();
        assert_eq!(a, b);
        let (tiny, stats) = remove_random(&d, 1e-9, 1).unwrap();
        assert_eq!(tiny, d);
        assert_eq!(stats.removed_cells, 0);
        assert!(remove_random(&d, 1.0, 1).is_err());
        assert!(remove_random(&d, 0.0, 1).is_err());
    }

    #[test]
    fn removed_cells_are_zeroed_and_kept_values_untouched() {
        let d = grid(20, 5);
        let (out, _) = remove_random(&d, 0.5, 5).unwrap();
        for (a, b) in d.records().iter().zip(out.records()) {
            for i in 0..5 {
                match b.value(i) {
                    Some(v) => assert_eq!(v, a.values()[i]),
                    None => assert_eq!(b.values()[i], 0.0),
                }
            }
        }
    }

    #[test]
    fn structural_hits_expected_fraction() {
        let d = two_gaussian_blobs(150, 5, 6.0, 2);
        let (out, stats) = remove_structural(&d, 0.9, 4).unwrap();
        assert!((stats.expected_fraction.unwrap() - 0.9).abs() <= 1e-4);
        // Each guarded record had one cell restored after sampling.
        let sampled = (stats.removed_cells + stats.guarded_records) as f64 / stats.total_cells as f64;
        assert!((sampled - 0.9).abs() < 0.03, "{sampled}");
        assert_eq!(out.missing_fraction(), stats.realized_fraction());
        assert!(out.records().iter().all(|r| r.observed_count() >= 1));
    }

    #[test]
    fn anchor_loses_its_own_attribute() {
        let d = two_gaussian_blobs(40, 4, 6.0, 8);
        let plan = plan_structural(&d, 0.6, 12).unwrap();
        assert_eq!(plan.anchors.len(), 4);
        let (out, stats) = remove_structural(&d, 0.6, 12).unwrap();
        for (i, &a) in plan.anchors.iter().enumerate() {
            assert_eq!(plan.distances[a][i], 0.0);
            assert_eq!(plan.probability(a, i), 1.0);
            if stats.guarded_records == 0 {
                assert!(!out.records()[a].is_observed(i));
            }
        }
    }

    #[test]
    fn zero_distance_means_certain_removal() {
        let distances = vec![vec![0.0, 2.0], vec![1.0, 0.0]];
        assert_eq!(expected_fraction(&distances, 1e9), 0.5);
        assert!((expected_fraction(&distances, 0.0) - 1.0).abs() < 1e-15);
        assert!(matches!(fit_rate(&distances, 0.4), Err(Error::TargetUnreachable { .. })));
        let t = fit_rate(&distances, 0.7).unwrap();
        assert!((expected_fraction(&distances, t) - 0.7).abs() <= 1e-5);
    }

    #[test]
    fn large_rate_removes_nothing() {
        let distances = vec![vec![1.0, 2.0], vec![3.0, 0.5]];
        assert!(expected_fraction(&distances, 1e6) < 1e-100);
    }

    #[test]
    fn structural_rejects_incomplete_input() {
        let mut d = grid(10, 3);
        d.records_mut()[0].remove(1);
        assert!(matches!(remove_structural(&d, 0.5, 1), Err(Error::InvalidConfig(_))));
    }
}
