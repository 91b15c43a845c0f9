//! Basepoint selection.
//!
//! Imputation never changes the free directions of a subspace; it only moves
//! the basepoint within the affine set. Zero and most-probable imputation
//! work for arbitrary subspaces. Mean and median fill individual coordinates
//! and are only defined for canonical masks.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::Moments;
use crate::subspace::{project, subspace_from_record, Dataset, IncompleteRecord, PointedSubspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Zero,
    Mean,
    Median,
    MostProbable,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Zero,
        StrategyKind::Mean,
        StrategyKind::Median,
        StrategyKind::MostProbable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Zero => "zero",
            StrategyKind::Mean => "mean",
            StrategyKind::Median => "median",
            StrategyKind::MostProbable => "most-probable",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(StrategyKind::Zero),
            "mean" => Ok(StrategyKind::Mean),
            "median" => Ok(StrategyKind::Median),
            "most-probable" | "most_probable" => Ok(StrategyKind::MostProbable),
            other => Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }
}

/// `x − p_V(x)`: the point of the affine set closest to the origin.
pub fn impute_zero(s: &PointedSubspace) -> PointedSubspace {
    let x = s.basepoint();
    s.with_basepoint(x - project(s.basis(), x))
}

fn fill_canonical(record: &IncompleteRecord, fill: impl Fn(usize) -> f64) -> PointedSubspace {
    let canonical = subspace_from_record(record);
    canonical.with_basepoint(record.filled_with(fill))
}

/// Fills missing slots from `moments.mean()`.
pub fn impute_mean(record: &IncompleteRecord, moments: &Moments) -> Result<PointedSubspace> {
    impute_with_means(record, moments.mean())
}

fn impute_with_means(record: &IncompleteRecord, means: &DVector<f64>) -> Result<PointedSubspace> {
    if means.len() != record.dim() {
        return Err(Error::DimensionMismatch {
            expected: record.dim(),
            found: means.len(),
        });
    }
    Ok(fill_canonical(record, |j| means[j]))
}

/// Per-coordinate averages of observed values.
pub fn column_means(data: &Dataset) -> Result<DVector<f64>> {
    let mut means = DVector::zeros(data.dimension());
    for i in 0..data.dimension() {
        let (sum, count) = data
            .records()
            .iter()
            .filter_map(|r| r.value(i))
            .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
        if count == 0 {
            return Err(Error::CoordinateNeverObserved(i));
        }
        means[i] = sum / count as f64;
    }
    Ok(means)
}

/// Per-coordinate medians of observed training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medians(Vec<Option<f64>>);

impl Medians {
    /// Even counts take the average of the two middle values.
    pub fn fit(data: &Dataset) -> Self {
        let medians = (0..data.dimension())
            .map(|i| {
                let mut obs: Vec<f64> = data.records().iter().filter_map(|r| r.value(i)).collect();
                if obs.is_empty() {
                    return None;
                }
                obs.sort_by(f64::total_cmp);
                let k = obs.len();
                Some(if k % 2 == 1 {
                    obs[k / 2]
                } else {
                    0.5 * (obs[k / 2 - 1] + obs[k / 2])
                })
            })
            .collect();
        Medians(medians)
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn impute(&self, record: &IncompleteRecord) -> Result<PointedSubspace> {
        if self.len() != record.dim() {
            return Err(Error::DimensionMismatch {
                expected: record.dim(),
                found: self.len(),
            });
        }
        for j in record.missing_indices() {
            if self.get(j).is_none() {
                return Err(Error::CoordinateNeverObserved(j));
            }
        }
        Ok(fill_canonical(record, |j| self.get(j).unwrap_or(0.0)))
    }
}

/// Median imputation against the observed values in `data`.
pub fn impute_median(record: &IncompleteRecord, data: &Dataset) -> Result<PointedSubspace> {
    Medians::fit(data).impute(record)
}

/// Mahalanobis projection of the mean onto the affine set:
/// `x + B(BᵀΣ⁻¹B)⁻¹BᵀΣ⁻¹(m − x)`.
pub fn impute_most_probable(s: &PointedSubspace, moments: &Moments) -> Result<PointedSubspace> {
    if moments.dim() != s.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: s.ambient_dim(),
            found: moments.dim(),
        });
    }
    if s.dim() == 0 {
        return Ok(s.clone());
    }
    let sigma = moments.cholesky()?;
    most_probable_with(s, moments.mean(), &sigma)
}

pub(crate) fn most_probable_with(
    s: &PointedSubspace,
    mean: &DVector<f64>,
    sigma: &Cholesky<f64, nalgebra::Dyn>,
) -> Result<PointedSubspace> {
    if s.dim() == 0 {
        return Ok(s.clone());
    }
    let b = s.basis();
    let x = s.basepoint();
    let sinv_b = sigma.solve(b);
    let gram = b.transpose() * &sinv_b;
    let rhs = sinv_b.transpose() * (mean - x);
    let gram_chol = Cholesky::new(gram).ok_or(Error::SingularGram)?;
    let t = gram_chol.solve(&rhs);
    Ok(s.with_basepoint(x + b * t))
}

/// A fitted imputation rule.
#[derive(Debug, Clone, PartialEq)]
pub enum ImputationStrategy {
    Zero,
    Mean(DVector<f64>),
    Median(Medians),
    MostProbable(Moments),
}

impl ImputationStrategy {
    /// Fits the statistics a strategy needs from training data. Means and
    /// medians use observed values only; most-probable uses `moments`.
    pub fn fit(kind: StrategyKind, train: &Dataset, moments: Option<&Moments>) -> Result<Self> {
        Ok(match kind {
            StrategyKind::Zero => ImputationStrategy::Zero,
            StrategyKind::Mean => ImputationStrategy::Mean(column_means(train)?),
            StrategyKind::Median => ImputationStrategy::Median(Medians::fit(train)),
            StrategyKind::MostProbable => ImputationStrategy::MostProbable(
                moments.cloned().ok_or(Error::MissingStatistics("most-probable"))?,
            ),
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            ImputationStrategy::Zero => StrategyKind::Zero,
            ImputationStrategy::Mean(_) => StrategyKind::Mean,
            ImputationStrategy::Median(_) => StrategyKind::Median,
            ImputationStrategy::MostProbable(_) => StrategyKind::MostProbable,
        }
    }

    pub fn impute_record(&self, record: &IncompleteRecord) -> Result<PointedSubspace> {
        match self {
            ImputationStrategy::Zero => Ok(impute_zero(&subspace_from_record(record))),
            ImputationStrategy::Mean(means) => impute_with_means(record, means),
            ImputationStrategy::Median(medians) => medians.impute(record),
            ImputationStrategy::MostProbable(m) => impute_most_probable(&subspace_from_record(record), m),
        }
    }

    /// Imputes a whole dataset; most-probable factors `Σ` once.
    pub fn impute_all(&self, data: &Dataset) -> Result<Vec<PointedSubspace>> {
        if let ImputationStrategy::MostProbable(m) = self {
            let sigma = m.cholesky()?;
            return data
                .records()
                .iter()
                .map(|r| most_probable_with(&subspace_from_record(r), m.mean(), &sigma))
                .collect();
        }
        data.records().iter().map(|r| self.impute_record(r)).collect()
    }

    /// Imputes a general subspace. Mean and median require a canonical mask.
    pub fn impute_subspace(&self, s: &PointedSubspace) -> Result<PointedSubspace> {
        match self {
            ImputationStrategy::Zero => Ok(impute_zero(s)),
            ImputationStrategy::MostProbable(m) => impute_most_probable(s, m),
            ImputationStrategy::Mean(_) | ImputationStrategy::Median(_) => {
                let mask = s.canonical_mask().ok_or(Error::NonCanonicalSubspace)?;
                let mut observed = vec![true; s.ambient_dim()];
                for j in mask {
                    observed[j] = false;
                }
                let record = IncompleteRecord::new(s.basepoint().iter().copied().collect(), observed, None)?;
                self.impute_record(&record)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentSource;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn e2() -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }

    fn moments(mean: &[f64], cov: DMatrix<f64>) -> Moments {
        Moments::new(v(mean), cov, MomentSource::Exact).unwrap()
    }

    #[test]
    fn zero_examples() {
        let s = PointedSubspace::new(v(&[1.0, 7.0]), e2()).unwrap();
        assert_eq!(impute_zero(&s).basepoint(), &v(&[1.0, 0.0]));

        let s = PointedSubspace::from_spanning(v(&[2.0, 2.0]), &[v(&[1.0, 1.0])]).unwrap();
        assert_abs_diff_eq!(impute_zero(&s).basepoint(), &v(&[0.0, 0.0]), epsilon = 1e-14);

        let p = PointedSubspace::point(v(&[3.0, -1.0]));
        assert_eq!(impute_zero(&p), p);
    }

    #[test]
    fn mean_examples() {
        let m = moments(&[0.0, 5.0], DMatrix::identity(2, 2));
        let r = IncompleteRecord::from_options(&[Some(1.0), None], None);
        let s = impute_mean(&r, &m).unwrap();
        assert_eq!(s.basepoint(), &v(&[1.0, 5.0]));
        assert_eq!(s.basis(), &e2());

        let full = IncompleteRecord::complete(vec![9.0, 8.0], None);
        assert_eq!(impute_mean(&full, &m).unwrap().basepoint(), &v(&[9.0, 8.0]));

        let m = moments(&[3.0, 4.0], DMatrix::identity(2, 2));
        let empty = IncompleteRecord::from_options(&[None, None], None);
        let s = impute_mean(&empty, &m).unwrap();
        assert_eq!(s.basepoint(), &v(&[3.0, 4.0]));
        assert_eq!(s.basis(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn median_examples() {
        let train = Dataset::from_records(vec![
            IncompleteRecord::complete(vec![1.0, 1.0], None),
            IncompleteRecord::complete(vec![2.0, 3.0], None),
            IncompleteRecord::from_options(&[Some(100.0), None], None),
        ])
        .unwrap();
        let r = IncompleteRecord::from_options(&[None, None], None);
        let s = impute_median(&r, &train).unwrap();
        assert_eq!(s.basepoint(), &v(&[2.0, 2.0]));

        let full = IncompleteRecord::complete(vec![-4.0, 0.5], None);
        assert_eq!(impute_median(&full, &train).unwrap().basepoint(), &v(&[-4.0, 0.5]));

        let never = Dataset::from_records(vec![IncompleteRecord::from_options(&[Some(1.0), None], None)]).unwrap();
        assert!(matches!(impute_median(&r, &never), Err(Error::CoordinateNeverObserved(1))));
    }

    #[test]
    fn most_probable_examples() {
        let s = PointedSubspace::new(v(&[1.0, 0.0]), e2()).unwrap();
        let m = moments(&[3.0, 5.0], DMatrix::identity(2, 2));
        assert_abs_diff_eq!(impute_most_probable(&s, &m).unwrap().basepoint(), &v(&[1.0, 5.0]), epsilon = 1e-14);

        let m = moments(&[0.0, 0.0], DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        assert_abs_diff_eq!(impute_most_probable(&s, &m).unwrap().basepoint(), &v(&[1.0, 0.5]), epsilon = 1e-12);

        let p = PointedSubspace::point(v(&[4.0, 4.0]));
        assert_eq!(impute_most_probable(&p, &m).unwrap(), p);
    }

    #[test]
    fn most_probable_with_identity_is_zero_imputation() {
        let s = PointedSubspace::from_spanning(v(&[2.0, -1.0, 3.0]), &[v(&[1.0, 2.0, 0.5])]).unwrap();
        let m = moments(&[0.0, 0.0, 0.0], DMatrix::identity(3, 3));
        let a = impute_most_probable(&s, &m).unwrap();
        let b = impute_zero(&s);
        assert_abs_diff_eq!(a.basepoint(), b.basepoint(), epsilon = 1e-10);
    }

    #[test]
    fn mean_rejects_rotated_subspace() {
        let strat = ImputationStrategy::Mean(v(&[0.0, 0.0]));
        let s = PointedSubspace::from_spanning(v(&[1.0, 1.0]), &[v(&[1.0, 1.0])]).unwrap();
        assert!(matches!(strat.impute_subspace(&s), Err(Error::NonCanonicalSubspace)));
        let c = PointedSubspace::new(v(&[1.0, 0.0]), e2()).unwrap();
        assert_eq!(strat.impute_subspace(&c).unwrap().basepoint(), &v(&[1.0, 0.0]));
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("bogus".parse::<StrategyKind>().is_err());
    }
}
