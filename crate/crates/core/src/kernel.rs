//! The D-weighted scalar product on pointed subspaces.
//!
//! A pointed subspace `x + V` embeds as `(x, √D·p_V)`, so
//!
//! ```text
//! ⟨x + V, y + W⟩_D = ⟨x, y⟩ + D·⟨p_V, p_W⟩_F = ⟨x, y⟩ + D·‖B_Vᵀ B_W‖²_F
//! ```
//!
//! The right-hand form costs `O(n_V · n_W · N)` and never builds an `N×N`
//! projector. For canonical masks and `D = 1` it equals the classical flag
//! product `⟨x, y⟩ + |J ∩ K|`.
//!
//! The value depends on the basepoint, not just on the affine set: `x + V`
//! and `x + v + V` (with `v ∈ V`) generally give different products.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::{IncompleteRecord, PointedSubspace};

/// Weight `D ∈ [0, 1]` of the projection term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    d_weight: f64,
}

impl KernelConfig {
    pub fn new(d_weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&d_weight) {
            return Err(Error::InvalidConfig(format!("D must lie in [0, 1], got {d_weight}")));
        }
        Ok(Self { d_weight })
    }

    pub fn d_weight(&self) -> f64 {
        self.d_weight
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { d_weight: 1.0 }
    }
}

/// `(x, √D·p_V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPoint {
    pub basepoint: DVector<f64>,
    pub scaled_projection: DMatrix<f64>,
}

impl EmbeddedPoint {
    /// Euclidean product of basepoints plus Frobenius product of projections.
    pub fn inner(&self, other: &EmbeddedPoint) -> f64 {
        self.basepoint.dot(&other.basepoint) + self.scaled_projection.dot(&other.scaled_projection)
    }
}

pub fn embed(s: &PointedSubspace, config: KernelConfig) -> EmbeddedPoint {
    EmbeddedPoint {
        basepoint: s.basepoint().clone(),
        scaled_projection: s.projection_matrix() * config.d_weight.sqrt(),
    }
}

fn check_dims(a: &PointedSubspace, b: &PointedSubspace) -> Result<()> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.ambient_dim(),
            found: b.ambient_dim(),
        });
    }
    Ok(())
}

/// `⟨p_V, p_W⟩_F = Σ_{j,k} ⟨v_j, w_k⟩²`.
pub fn projection_product(a: &PointedSubspace, b: &PointedSubspace) -> Result<f64> {
    check_dims(a, b)?;
    if a.dim() == 0 || b.dim() == 0 {
        return Ok(0.0);
    }
    Ok((a.basis().transpose() * b.basis()).norm_squared())
}

/// `⟨x, y⟩ + D·⟨p_V, p_W⟩`.
pub fn dot(a: &PointedSubspace, b: &PointedSubspace, config: KernelConfig) -> Result<f64> {
    check_dims(a, b)?;
    let base = a.basepoint().dot(b.basepoint());
    if config.d_weight == 0.0 {
        return Ok(base);
    }
    Ok(base + config.d_weight * projection_product(a, b)?)
}

/// Zero-filled values joined with the missing-coordinate indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagPair {
    pub filled: DVector<f64>,
    pub flags: DVector<f64>,
}

impl FlagPair {
    pub fn new(filled: DVector<f64>, flags: DVector<f64>) -> Result<Self> {
        if filled.len() != flags.len() {
            return Err(Error::DimensionMismatch {
                expected: filled.len(),
                found: flags.len(),
            });
        }
        if flags.iter().any(|&f| f != 0.0 && f != 1.0) {
            return Err(Error::InvalidConfig("flags must be 0 or 1".into()));
        }
        Ok(Self { filled, flags })
    }

    pub fn from_record(record: &IncompleteRecord) -> Self {
        let n = record.dim();
        Self {
            filled: record.filled_with(|_| 0.0),
            flags: DVector::from_iterator(n, record.observed().iter().map(|&o| if o { 0.0 } else { 1.0 })),
        }
    }
}

/// `⟨x, y⟩ + |J ∩ K|`.
pub fn flag_dot(a: &FlagPair, b: &FlagPair) -> Result<f64> {
    if a.filled.len() != b.filled.len() {
        return Err(Error::DimensionMismatch {
            expected: a.filled.len(),
            found: b.filled.len(),
        });
    }
    Ok(a.filled.dot(&b.filled) + a.flags.dot(&b.flags))
}

/// Symmetric kernel matrix together with the weight that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub config: KernelConfig,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    /// Rows and columns at `indices`.
    pub fn submatrix(&self, indices: &[usize]) -> GramMatrix {
        GramMatrix {
            entries: DMatrix::from_fn(indices.len(), indices.len(), |i, j| {
                self.entries[(indices[i], indices[j])]
            }),
            config: self.config,
        }
    }

    /// Rows `rows` against columns `cols`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.entries[(rows[i], cols[j])])
    }
}

fn common_dim(points: &[PointedSubspace]) -> Result<usize> {
    let n = points.first().map_or(0, PointedSubspace::ambient_dim);
    for p in points {
        if p.ambient_dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.ambient_dim(),
            });
        }
    }
    Ok(n)
}

/// The two summands of the kernel kept apart, so any `D` is one axpy away.
#[derive(Debug, Clone, PartialEq)]
pub struct GramParts {
    /// `⟨x_i, x_j⟩`
    pub base: DMatrix<f64>,
    /// `⟨p_{V_i}, p_{V_j}⟩_F`
    pub projection: DMatrix<f64>,
}

impl GramParts {
    pub fn combine(&self, config: KernelConfig) -> GramMatrix {
        let entries = if config.d_weight == 0.0 {
            self.base.clone()
        } else {
            &self.base + &self.projection * config.d_weight
        };
        GramMatrix { entries, config }
    }

    pub fn len(&self) -> usize {
        self.base.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.base.nrows() == 0
    }
}

/// Both summands for all pairs, computed over the upper triangle in parallel.
pub fn gram_parts(points: &[PointedSubspace]) -> Result<GramParts> {
    common_dim(points)?;
    let n = points.len();
    let rows: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    let a = &points[i];
                    let b = &points[j];
                    let base = a.basepoint().dot(b.basepoint());
                    let proj = if a.dim() == 0 || b.dim() == 0 {
                        0.0
                    } else {
                        (a.basis().transpose() * b.basis()).norm_squared()
                    };
                    (base, proj)
                })
                .collect()
        })
        .collect();
    let mut base = DMatrix::zeros(n, n);
    let mut projection = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, (b, p)) in row.into_iter().enumerate() {
            let j = i + offset;
            base[(i, j)] = b;
            base[(j, i)] = b;
            projection[(i, j)] = p;
            projection[(j, i)] = p;
        }
    }
    Ok(GramParts { base, projection })
}

/// `entries[i][j] = dot(points[i], points[j])`.
pub fn gram(points: &[PointedSubspace], config: KernelConfig) -> Result<GramMatrix> {
    Ok(gram_parts(points)?.combine(config))
}

/// `entries[i][j] = dot(test[i], train[j])`; shape `test.len() × train.len()`.
pub fn cross_gram(train: &[PointedSubspace], test: &[PointedSubspace], config: KernelConfig) -> Result<DMatrix<f64>> {
    let n = common_dim(train)?;
    if let Some(t) = test.iter().find(|t| !train.is_empty() && t.ambient_dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: t.ambient_dim(),
        });
    }
    let rows: Vec<Vec<f64>> = test
        .par_iter()
        .map(|t| train.iter().map(|s| dot(t, s, config)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(test.len(), train.len(), |i, j| rows[i][j]))
}
