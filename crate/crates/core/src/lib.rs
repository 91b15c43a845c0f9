//! Incomplete records as pointed affine subspaces.
//!
//! A record with missing coordinates `J` is the affine set `x + span(e_j : j ∈ J)`
//! together with a chosen basepoint `x`. Imputation picks the basepoint,
//! affine maps (whitening, PCA) act on basepoint and direction space together,
//! and the kernel
//!
//! ```text
//! K(x + V, y + W) = ⟨x, y⟩ + D · ⟨p_V, p_W⟩_F
//! ```
//!
//! compares two such objects through their basepoints and orthogonal
//! projectors. [`svm`] trains a soft-margin classifier on that kernel and
//! [`harness`] wraps everything in a cross-validated experiment.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod impute;
mod linalg;
pub mod kernel;
pub mod moments;
pub mod subspace;
pub mod svm;
pub mod transform;

pub use error::{Error, ErrorKind, Result};
pub use impute::{ImputationStrategy, StrategyKind};
pub use kernel::{cross_gram, dot, flag_dot, gram, gram_parts, FlagPair, GramMatrix, KernelConfig};
pub use moments::{available_case_moments, em_fit, em_moments, EmConfig, MomentSource, Moments};
pub use subspace::{AffineSubspace, Dataset, IncompleteRecord, PointedSubspace};
pub use svm::{SmoConfig, SvmModel};
pub use transform::{apply_affine, intersect_constraint, pca_map, whitening_map, AffineMap};
