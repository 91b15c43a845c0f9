//! Fit-on-train preprocessing (moments, imputation, whitening) and the
//! persisted end-to-end classifier.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute::{ImputationStrategy, Medians, StrategyKind};
use crate::kernel::{gram, KernelConfig};
use crate::moments::{available_case_moments, default_ridge, em_moments, EmConfig, Moments};
use crate::subspace::{Dataset, PointedSubspace};
use crate::svm::{train, SmoConfig};
use crate::transform::{apply_affine, whitening_map, AffineMap};

use super::io::SubspaceRecord;

/// How an imputed record enters the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Embedding {
    /// Whitened basepoint only; the subspace is discarded.
    NoInformation,
    /// Whitened basepoint and whitened subspace.
    Subspace,
}

impl Embedding {
    pub const ALL: [Embedding; 2] = [Embedding::NoInformation, Embedding::Subspace];

    pub fn as_str(self) -> &'static str {
        match self {
            Embedding::NoInformation => "no-information",
            Embedding::Subspace => "subspace",
        }
    }
}

impl fmt::Display for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Embedding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-information" | "no_information" => Ok(Embedding::NoInformation),
            "subspace" => Ok(Embedding::Subspace),
            other => Err(Error::InvalidConfig(format!("unknown embedding `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMethod {
    #[default]
    Em,
    AvailableCase,
}

impl FromStr for MomentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(MomentMethod::Em),
            "available-case" | "available_case" => Ok(MomentMethod::AvailableCase),
            other => Err(Error::InvalidConfig(format!("unknown moments method `{other}`"))),
        }
    }
}

/// Moments with the data-scaled default ridge.
pub fn fit_moments(train: &Dataset, method: MomentMethod) -> Result<Moments> {
    match method {
        MomentMethod::Em => em_moments(train, &EmConfig::for_data(train)),
        MomentMethod::AvailableCase => available_case_moments(train, default_ridge(train)),
    }
}

/// Everything fitted on training data before the kernel is formed.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub moments: Moments,
    pub imputer: ImputationStrategy,
    pub whitening: AffineMap,
}

impl Preprocessor {
    /// One moments estimate feeds both most-probable imputation and whitening.
    pub fn fit(train: &Dataset, strategy: StrategyKind, moments: Moments) -> Result<Self> {
        let imputer = ImputationStrategy::fit(strategy, train, Some(&moments))?;
        let whitening = whitening_map(&moments)?;
        Ok(Self {
            moments,
            imputer,
            whitening,
        })
    }

    /// Imputed and whitened subspaces, before any embedding choice.
    pub fn transform(&self, data: &Dataset) -> Result<Vec<PointedSubspace>> {
        self.imputer
            .impute_all(data)?
            .iter()
            .map(|s| apply_affine(&self.whitening, s))
            .collect()
    }

    pub fn embed(&self, data: &Dataset, embedding: Embedding) -> Result<Vec<PointedSubspace>> {
        let pts = self.transform(data)?;
        Ok(match embedding {
            Embedding::Subspace => pts,
            Embedding::NoInformation => pts
                .into_iter()
                .map(|p| PointedSubspace::point(p.basepoint().clone()))
                .collect(),
        })
    }
}

/// Settings for [`PipelineModel::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub strategy: StrategyKind,
    pub embedding: Embedding,
    pub moments: MomentMethod,
    pub c: f64,
    pub d_weight: f64,
    pub smo: SmoConfig,
}

pub const MODEL_FORMAT: &str = "pointedmiss-model/1";

/// A trained classifier with everything needed to score raw records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub format: String,
    pub strategy: StrategyKind,
    pub embedding: Embedding,
    pub c: f64,
    pub d_weight: f64,
    pub bias: f64,
    /// Dual coefficients of the support vectors, aligned with `support_indices`.
    pub alphas: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub support_labels: Vec<i32>,
    pub support_vectors: Vec<SubspaceRecord>,
    pub converged: bool,
    pub moments: Moments,
    pub affine_map: AffineMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medians: Option<Medians>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

impl PipelineModel {
    pub fn fit(data: &Dataset, spec: &PipelineSpec, classes: Option<[String; 2]>) -> Result<Self> {
        let labels = data
            .labels()
            .ok_or_else(|| Error::InvalidConfig("training data must be labeled".into()))?;
        let config = KernelConfig::new(spec.d_weight)?;
        let moments = fit_moments(data, spec.moments)?;
        let pre = Preprocessor::fit(data, spec.strategy, moments)?;
        let points = pre.embed(data, spec.embedding)?;
        let svm = train(&gram(&points, config)?, &labels, spec.c, &spec.smo)?;

        let (means, medians) = match &pre.imputer {
            ImputationStrategy::Mean(m) => (Some(m.iter().copied().collect()), None),
            ImputationStrategy::Median(m) => (None, Some(m.clone())),
            _ => (None, None),
        };
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            strategy: spec.strategy,
            embedding: spec.embedding,
            c: spec.c,
            d_weight: spec.d_weight,
            bias: svm.bias,
            alphas: svm.support_indices.iter().map(|&i| svm.alphas[i]).collect(),
            support_labels: svm.support_indices.iter().map(|&i| labels[i]).collect(),
            support_vectors: svm
                .support_indices
                .iter()
                .map(|&i| SubspaceRecord::from_subspace(&points[i], Some(labels[i])))
                .collect(),
            support_indices: svm.support_indices,
            converged: svm.converged,
            moments: pre.moments,
            affine_map: pre.whitening,
            means,
            medians,
            classes,
            feature_names: data.feature_names.clone(),
        })
    }

    fn preprocessor(&self) -> Result<Preprocessor> {
        let imputer = match self.strategy {
            StrategyKind::Zero => ImputationStrategy::Zero,
            StrategyKind::Mean => ImputationStrategy::Mean(DVector::from_vec(
                self.means.clone().ok_or(Error::MissingStatistics("mean"))?,
            )),
            StrategyKind::Median => {
                ImputationStrategy::Median(self.medians.clone().ok_or(Error::MissingStatistics("median"))?)
            }
            StrategyKind::MostProbable => ImputationStrategy::MostProbable(self.moments.clone()),
        };
        Ok(Preprocessor {
            moments: self.moments.clone(),
            imputer,
            whitening: self.affine_map.clone(),
        })
    }

    /// Predicted labels and decision values for every record.
    pub fn predict(&self, data: &Dataset) -> Result<(Vec<i32>, Vec<f64>)> {
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidConfig(format!("unsupported model format `{}`", self.format)));
        }
        let config = KernelConfig::new(self.d_weight)?;
        let points = self.preprocessor()?.embed(data, self.embedding)?;
        let support: Vec<PointedSubspace> = self
            .support_vectors
            .iter()
            .map(SubspaceRecord::to_subspace)
            .collect::<Result<_>>()?;
        let rows = crate::kernel::cross_gram(&support, &points, config)?;
        let values: Vec<f64> = (0..points.len())
            .map(|r| {
                (0..support.len())
                    .map(|s| self.alphas[s] * self.support_labels[s] as f64 * rows[(r, s)])
                    .sum::<f64>()
                    + self.bias
            })
            .collect();
        let labels = values.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
        Ok((labels, values))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::missingness::remove_random;
    use crate::harness::synthetic::two_gaussian_blobs;

    #[test]
    fn no_information_drops_subspace() {
        let d = two_gaussian_blobs(40, 3, 4.0, 1);
        let (d, _) = remove_random(&d, 0.3, 2).unwrap();
        let m = fit_moments(&d, MomentMethod::AvailableCase).unwrap();
        let pre = Preprocessor::fit(&d, StrategyKind::Zero, m).unwrap();
        let sub = pre.embed(&d, Embedding::Subspace).unwrap();
        let none = pre.embed(&d, Embedding::NoInformation).unwrap();
        assert!(sub.iter().any(|p| p.dim() > 0));
        for (a, b) in sub.iter().zip(&none) {
            assert_eq!(b.dim(), 0);
            assert_eq!(a.basepoint(), b.basepoint());
        }
    }

    #[test]
    fn model_round_trip_predicts_identically() {
        let d = two_gaussian_blobs(60, 4, 5.0, 3);
        let (d, _) = remove_random(&d, 0.4, 4).unwrap();
        for strategy in StrategyKind::ALL {
            let spec = PipelineSpec {
                strategy,
                embedding: Embedding::Subspace,
                moments: MomentMethod::Em,
                c: 1.0,
                d_weight: 0.5,
                smo: SmoConfig::default(),
            };
            let model = PipelineModel::fit(&d, &spec, None).unwrap();
            let text = serde_json::to_string(&model).unwrap();
            let back: PipelineModel = serde_json::from_str(&text).unwrap();
            let (la, va) = model.predict(&d).unwrap();
            let (lb, vb) = back.predict(&d).unwrap();
            assert_eq!(la, lb);
            assert_eq!(va, vb);
            let labels = d.labels().unwrap();
            let acc = la.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
            assert!(acc > 0.8, "{strategy}: {acc}");
        }
    }
}
