//! Affine maps of pointed subspaces.
//!
//! `f(x + V) = (Ax + b) + AV`. The image basis is re-orthonormalized, so its
//! dimension drops when `A` is singular on `V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, sorted_eigen, spectral_map, to_rows};
use crate::moments::Moments;
use crate::subspace::{orthonormalize_default, projection_matrix, AffineSubspace, PointedSubspace};

/// `w ↦ A w + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineMapFile", into = "AffineMapFile")]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: offset.len(),
            });
        }
        Ok(Self { matrix, offset })
    }

    pub fn linear(matrix: DMatrix<f64>) -> Self {
        let offset = DVector::zeros(matrix.nrows());
        Self { matrix, offset }
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply_point(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(&self.matrix * x + &self.offset)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> Result<AffineMap> {
        if inner.output_dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: inner.output_dim(),
            });
        }
        Ok(AffineMap {
            matrix: &self.matrix * &inner.matrix,
            offset: &self.matrix * &inner.offset + &self.offset,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct AffineMapFile {
    matrix: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl From<AffineMap> for AffineMapFile {
    fn from(m: AffineMap) -> Self {
        Self {
            matrix: to_rows(&m.matrix),
            offset: m.offset.iter().copied().collect(),
        }
    }
}

impl TryFrom<AffineMapFile> for AffineMap {
    type Error = Error;

    fn try_from(f: AffineMapFile) -> Result<Self> {
        let ncols = f.matrix.first().map_or(0, Vec::len);
        let matrix = from_rows(&f.matrix, ncols).ok_or(Error::DimensionMismatch {
            expected: ncols,
            found: f.matrix.iter().map(Vec::len).find(|&l| l != ncols).unwrap_or(0),
        })?;
        AffineMap::new(matrix, DVector::from_vec(f.offset))
    }
}

/// Image of a pointed subspace under an affine map.
pub fn apply_affine(map: &AffineMap, s: &PointedSubspace) -> Result<PointedSubspace> {
    let basepoint = map.apply_point(s.basepoint())?;
    let image = &map.matrix * s.basis();
    let columns: Vec<DVector<f64>> = image.column_iter().map(|c| c.into_owned()).collect();
    let basis = orthonormalize_default(&columns, map.output_dim());
    Ok(PointedSubspace::from_parts(basepoint, basis))
}

/// `x ↦ Σ^{-1/2}(x − m)` with the symmetric inverse square root.
pub fn whitening_map(moments: &Moments) -> Result<AffineMap> {
    let (values, _) = sorted_eigen(moments.covariance());
    let top = values.iter().copied().fold(0.0, f64::max);
    let floor = top * f64::EPSILON * values.len() as f64;
    if values.iter().any(|&l| !(l > floor)) {
        return Err(Error::SingularCovariance);
    }
    let inv_sqrt = spectral_map(moments.covariance(), |l| 1.0 / l.sqrt());
    let offset = -(&inv_sqrt * moments.mean());
    Ok(AffineMap {
        matrix: inv_sqrt,
        offset,
    })
}

/// `x ↦ Wᵀ(x − m)` onto the `k` leading eigenvectors of `Σ`.
///
/// Eigenvectors are ordered by descending eigenvalue (ties keep solver
/// order) and signed so that the entry of largest magnitude is positive.
pub fn pca_map(moments: &Moments, k: usize) -> Result<AffineMap> {
    let n = moments.dim();
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, dim: n });
    }
    let (_, vectors) = sorted_eigen(moments.covariance());
    let mut w = vectors.columns(0, k).into_owned();
    for mut col in w.column_iter_mut() {
        let mut lead = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
    let matrix = w.transpose();
    let offset = -(&matrix * moments.mean());
    Ok(AffineMap { matrix, offset })
}

/// Default null-space threshold `1e-8 · N`.
pub fn default_intersection_tol(n: usize) -> f64 {
    1e-8 * n.max(1) as f64
}

/// `(x + V) ∩ W` for `x ∈ W`: keeps `x`, replaces `V` by `V ∩ (W − x)`.
///
/// The intersection is the null space of `[(I − P_V); (I − P_W)]`, read off
/// the right singular vectors whose singular value is `<= tol`.
pub fn intersect_constraint(s: &PointedSubspace, w: &AffineSubspace, tol: f64) -> Result<PointedSubspace> {
    let n = s.ambient_dim();
    if w.anchor().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.anchor().len(),
        });
    }
    let residual = w.residual(s.basepoint());
    if residual > tol {
        return Err(Error::BasepointOutsideConstraint { residual });
    }
    if n == 0 || s.dim() == 0 || w.basis().ncols() == 0 {
        return Ok(PointedSubspace::point(s.basepoint().clone()));
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let comp_v = &eye - projection_matrix(s.basis());
    let comp_w = &eye - projection_matrix(w.basis());
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&comp_v);
    stacked.view_mut((n, 0), (n, n)).copy_from(&comp_w);

    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let null: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= tol)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    let basis = orthonormalize_default(&null, n);
    Ok(PointedSubspace::from_parts(s.basepoint().clone(), basis))
}
