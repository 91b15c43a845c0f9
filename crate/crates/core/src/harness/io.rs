//! JSON exchange format for pointed subspaces.
//!
//! ```json
//! { "dimension": 2,
//!   "points": [ { "basepoint": [1.0, 0.0], "basis": [[0.0, 1.0]], "label": -1 } ] }
//! ```
//!
//! `basis` lists the orthonormal columns; an empty list is a complete point.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::PointedSubspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRecord {
    pub basepoint: Vec<f64>,
    #[serde(default)]
    pub basis: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i32>,
}

impl SubspaceRecord {
    pub fn from_subspace(s: &PointedSubspace, label: Option<i32>) -> Self {
        Self {
            basepoint: s.basepoint().iter().copied().collect(),
            basis: s.basis().column_iter().map(|c| c.iter().copied().collect()).collect(),
            label,
        }
    }

    pub fn to_subspace(&self) -> Result<PointedSubspace> {
        let n = self.basepoint.len();
        let columns: Vec<DVector<f64>> = self
            .basis
            .iter()
            .map(|c| {
                if c.len() == n {
                    Ok(DVector::from_column_slice(c))
                } else {
                    Err(Error::DimensionMismatch {
                        expected: n,
                        found: c.len(),
                    })
                }
            })
            .collect::<Result<_>>()?;
        let basis = if columns.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&columns)
        };
        PointedSubspace::new(DVector::from_column_slice(&self.basepoint), basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFile {
    pub dimension: usize,
    pub points: Vec<SubspaceRecord>,
}

impl SubspaceFile {
    pub fn new(dimension: usize, points: &[PointedSubspace], labels: Option<&[i32]>) -> Self {
        Self {
            dimension,
            points: points
                .iter()
                .enumerate()
                .map(|(i, p)| SubspaceRecord::from_subspace(p, labels.map(|l| l[i])))
                .collect(),
        }
    }

    pub fn subspaces(&self) -> Result<Vec<PointedSubspace>> {
        self.points
            .iter()
            .map(|p| {
                let s = p.to_subspace()?;
                if s.ambient_dim() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        found: s.ambient_dim(),
                    });
                }
                Ok(s)
            })
            .collect()
    }

    pub fn labels(&self) -> Option<Vec<i32>> {
        self.points.iter().map(|p| p.label).collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = PointedSubspace::from_spanning(DVector::from_vec(vec![1.0, 2.0]), &[DVector::from_vec(vec![1.0, 1.0])])
            .unwrap();
        let p = PointedSubspace::point(DVector::from_vec(vec![0.0, -1.0]));
        let f = SubspaceFile::new(2, &[s.clone(), p.clone()], Some(&[1, -1]));
        let text = serde_json::to_string(&f).unwrap();
        let back: SubspaceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.subspaces().unwrap(), vec![s, p]);
        assert_eq!(back.labels(), Some(vec![1, -1]));
    }

    #[test]
    fn rejects_bad_columns() {
        let r = SubspaceRecord {
            basepoint: vec![0.0, 0.0],
            basis: vec![vec![1.0, 1.0]],
            label: None,
        };
        assert!(matches!(r.to_subspace(), Err(Error::NotOrthonormal { .. })));
        let r = SubspaceRecord {
            basepoint: vec![0.0, 0.0],
            basis: vec![vec![1.0]],
            label: None,
        };
        assert!(matches!(r.to_subspace(), Err(Error::DimensionMismatch { .. })));
    }
}
