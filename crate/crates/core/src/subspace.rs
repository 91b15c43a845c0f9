//! Incomplete records and their representation as pointed affine subspaces.
//!
//! A record `(x, J)` with missing coordinates `J` is the affine set
//! `x + span(e_j : j ∈ J)`. After an affine map the free directions are no
//! longer canonical, so every subspace stores an explicit column-orthonormal
//! basis; canonical masks are just the special case where each column is a
//! unit axis vector.
//!
//! Note on projector norms: for an orthogonal projector `P` onto `V`, the
//! squared Frobenius norm `‖P‖²_F = tr(P) = dim V`, which is at most `N` and
//! equals `N` only when the record is entirely missing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for orthonormality checks on stored bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Raw feature vector with observed/missing flags.
///
/// Missing slots always hold the placeholder `0.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompleteRecord {
    values: Vec<f64>,
    observed: Vec<bool>,
    pub label: Option<i32>,
}

impl IncompleteRecord {
    /// Builds a record, overwriting missing slots with the `0.0` placeholder.
    pub fn new(mut values: Vec<f64>, observed: Vec<bool>, label: Option<i32>) -> Result<Self> {
        if values.len() != observed.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                found: observed.len(),
            });
        }
        for (v, &obs) in values.iter_mut().zip(&observed) {
            if !obs {
                *v = 0.0;
            }
        }
        Ok(Self {
            values,
            observed,
            label,
        })
    }

    /// A fully observed record.
    pub fn complete(values: Vec<f64>, label: Option<i32>) -> Self {
        let observed = vec![true; values.len()];
        Self {
            values,
            observed,
            label,
        }
    }

    /// Parses `None` entries as missing.
    pub fn from_options(values: &[Option<f64>], label: Option<i32>) -> Self {
        let observed: Vec<bool> = values.iter().map(Option::is_some).collect();
        let values = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        Self {
            values,
            observed,
            label,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.observed[i].then(|| self.values[i])
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.observed[i]).collect()
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.observed[i]).collect()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Marks coordinate `i` missing and clears its value.
    pub fn remove(&mut self, i: usize) {
        self.observed[i] = false;
        self.values[i] = 0.0;
    }

    /// Marks coordinate `i` observed with value `v`.
    pub fn restore(&mut self, i: usize, v: f64) {
        self.observed[i] = true;
        self.values[i] = v;
    }

    /// Values with missing slots filled from `fill`.
    pub fn filled_with(&self, fill: impl Fn(usize) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| if self.observed[i] { self.values[i] } else { fill(i) }),
        )
    }
}

/// An ordered collection of records sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<IncompleteRecord>,
    dimension: usize,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(records: Vec<IncompleteRecord>, dimension: usize) -> Result<Self> {
        for r in &records {
            if r.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: r.dim(),
                });
            }
        }
        Ok(Self {
            records,
            dimension,
            feature_names: None,
        })
    }

    /// Infers the dimension from the first record; an empty list has dimension 0.
    pub fn from_records(records: Vec<IncompleteRecord>) -> Result<Self> {
        let dim = records.first().map_or(0, IncompleteRecord::dim);
        Self::new(records, dim)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = Some(names);
        self
    }

    pub fn records(&self) -> &[IncompleteRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [IncompleteRecord] {
        &mut self.records
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Labels of all records; `None` if any record lacks one.
    pub fn labels(&self) -> Option<Vec<i32>> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// The records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            dimension: self.dimension,
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.records.iter().all(IncompleteRecord::is_complete)
    }

    /// Fraction of cells that are missing.
    pub fn missing_fraction(&self) -> f64 {
        let total = self.len() * self.dimension;
        if total == 0 {
            return 0.0;
        }
        let missing: usize = self
            .records
            .iter()
            .map(|r| r.dim() - r.observed_count())
            .sum();
        missing as f64 / total as f64
    }
}

/// A basepoint together with an orthonormal basis of the free directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointedSubspace {
    basepoint: DVector<f64>,
    basis: DMatrix<f64>,
}

impl PointedSubspace {
    /// Checks that `basis` has orthonormal columns of the basepoint's length.
    pub fn new(basepoint: DVector<f64>, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != basepoint.len() {
            return Err(Error::DimensionMismatch {
                expected: basepoint.len(),
                found: basis.nrows(),
            });
        }
        let deviation = orthonormality_deviation(&basis);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self { basepoint, basis })
    }

    /// Orthonormalizes arbitrary spanning vectors first.
    pub fn from_spanning(basepoint: DVector<f64>, vectors: &[DVector<f64>]) -> Result<Self> {
        for v in vectors {
            if v.len() != basepoint.len() {
                return Err(Error::DimensionMismatch {
                    expected: basepoint.len(),
                    found: v.len(),
                });
            }
        }
        let basis = orthonormalize_default(vectors, basepoint.len());
        Ok(Self { basepoint, basis })
    }

    /// A complete point (zero-dimensional subspace).
    pub fn point(basepoint: DVector<f64>) -> Self {
        let n = basepoint.len();
        Self {
            basepoint,
            basis: DMatrix::zeros(n, 0),
        }
    }

    pub(crate) fn from_parts(basepoint: DVector<f64>, basis: DMatrix<f64>) -> Self {
        debug_assert_eq!(basepoint.len(), basis.nrows());
        Self { basepoint, basis }
    }

    pub fn basepoint(&self) -> &DVector<f64> {
        &self.basepoint
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Ambient dimension `N`.
    pub fn ambient_dim(&self) -> usize {
        self.basepoint.len()
    }

    /// Dimension of the free subspace `n`.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Same affine directions, different basepoint.
    pub fn with_basepoint(&self, basepoint: DVector<f64>) -> Self {
        debug_assert_eq!(basepoint.len(), self.ambient_dim());
        Self {
            basepoint,
            basis: self.basis.clone(),
        }
    }

    pub fn projection_matrix(&self) -> DMatrix<f64> {
        projection_matrix(&self.basis)
    }

    /// Missing indices if every basis column is a signed unit axis vector.
    pub fn canonical_mask(&self) -> Option<Vec<usize>> {
        let mut indices = Vec::with_capacity(self.dim());
        for col in self.basis.column_iter() {
            let mut hit = None;
            for (i, &v) in col.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                if (v.abs() - 1.0).abs() > 1e-12 || hit.is_some() {
                    return None;
                }
                hit = Some(i);
            }
            indices.push(hit?);
        }
        indices.sort_unstable();
        indices.dedup();
        (indices.len() == self.dim()).then_some(indices)
    }

    /// Whether `point` lies in the affine set `basepoint + span(basis)`.
    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        contains(self, point, tol)
    }
}

/// An affine constraint set `anchor + span(basis)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    anchor: DVector<f64>,
    basis: DMatrix<f64>,
}

impl AffineSubspace {
    pub fn new(anchor: DVector<f64>, basis: DMatrix<f64>) -> Result<Self> {
        let inner = PointedSubspace::new(anchor, basis)?;
        Ok(Self {
            anchor: inner.basepoint,
            basis: inner.basis,
        })
    }

    pub fn from_spanning(anchor: DVector<f64>, vectors: &[DVector<f64>]) -> Result<Self> {
        let inner = PointedSubspace::from_spanning(anchor, vectors)?;
        Ok(Self {
            anchor: inner.basepoint,
            basis: inner.basis,
        })
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Distance from `point` to the affine set.
    pub fn residual(&self, point: &DVector<f64>) -> f64 {
        let d = point - &self.anchor;
        (&d - project(&self.basis, &d)).norm()
    }
}

/// Canonical construction: basis `e_j` for each missing `j` (ascending),
/// basepoint equal to the values with missing slots at zero.
pub fn subspace_from_record(record: &IncompleteRecord) -> PointedSubspace {
    let n = record.dim();
    let missing = record.missing_indices();
    let mut basis = DMatrix::zeros(n, missing.len());
    for (col, &j) in missing.iter().enumerate() {
        basis[(j, col)] = 1.0;
    }
    let basepoint = record.filled_with(|_| 0.0);
    PointedSubspace::from_parts(basepoint, basis)
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
///
/// Vectors whose residual norm after removing the span of the earlier output
/// is `<= tol` are dropped. `dim` is the ambient dimension, used to shape an
/// empty result.
pub fn orthonormalize(vectors: &[DVector<f64>], dim: usize, tol: f64) -> DMatrix<f64> {
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        debug_assert_eq!(v.len(), dim);
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &columns {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let norm = w.norm();
        if norm > tol {
            columns.push(w / norm);
        }
    }
    if columns.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&columns)
    }
}

/// [`orthonormalize`] with tolerance `1e-10 · max ‖v‖`.
pub fn orthonormalize_default(vectors: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let scale = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    orthonormalize(vectors, dim, 1e-10 * scale)
}

/// `Σ_j v_j v_jᵀ` for the orthonormal columns `v_j`.
pub fn projection_matrix(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

/// `Σ_j ⟨y, v_j⟩ v_j`.
pub fn project(basis: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    basis * (basis.transpose() * y)
}

pub fn contains(subspace: &PointedSubspace, point: &DVector<f64>, tol: f64) -> bool {
    let d = point - subspace.basepoint();
    (&d - project(subspace.basis(), &d)).norm() <= tol
}

/// Largest entry of `|BᵀB − I|`.
pub fn orthonormality_deviation(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.transpose() * basis;
    let n = gram.nrows();
    (gram - DMatrix::identity(n, n)).amax()
}
