//! Cluster-then-classify: K-means partitions the training set and each
//! cluster gets its own predictor (single model or ensemble).

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{self, KMeansModel};
use crate::dataset::Dataset;
use crate::ensemble::{EnsembleSpec, Rule};
use crate::error::{Error, Result};
use crate::learners::{fit_with_policy, BinaryClassifier, FittedClassifier, ModelSpec, TrainingPolicy};
use crate::matrix::Matrix;

/// Clusters smaller than this get a constant predictor.
pub const MIN_CLUSTER_SIZE: usize = 10;

/// What to fit on each cluster (or on the whole set, for flat learning).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictorTemplate {
    Single(ModelSpec),
    /// `members[j]` is the spec for `spec.members[j]`.
    Ensemble { spec: EnsembleSpec, members: Vec<ModelSpec> },
}

impl PredictorTemplate {
    pub fn ensemble(spec: EnsembleSpec, pool: &[ModelSpec]) -> Result<Self> {
        spec.validate()?;
        let members = spec
            .members
            .iter()
            .map(|&i| {
                pool.get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidEnsemble(format!("member {i} is outside a pool of {}", pool.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::Ensemble { spec, members })
    }

    pub fn label(&self) -> String {
        match self {
            Self::Single(s) => s.acronym(),
            Self::Ensemble { spec, .. } => spec.label(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Single(s) => s.validate(),
            Self::Ensemble { spec, members } => {
                spec.validate()?;
                if members.len() != spec.members.len() {
                    return Err(Error::InvalidEnsemble(format!(
                        "{} member specs for a {}-member ensemble",
                        members.len(),
                        spec.members.len()
                    )));
                }
                members.iter().try_for_each(ModelSpec::validate)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantReason {
    SingleClassCluster,
    SmallCluster,
    EmptyCluster,
}

impl fmt::Display for ConstantReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SingleClassCluster => "single_class_cluster",
            Self::SmallCluster => "small_cluster",
            Self::EmptyCluster => "empty_cluster",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantPredictor {
    pub label: u8,
    pub reason: ConstantReason,
    dim: usize,
}

impl ConstantPredictor {
    pub fn new(label: u8, reason: ConstantReason, dim: usize) -> Self {
        Self { label, reason, dim }
    }
}

impl BinaryClassifier for ConstantPredictor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_one(&self, _x: &[f64]) -> u8 {
        self.label
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedPredictor {
    Single(FittedClassifier),
    Ensemble {
        rule: Rule,
        members: Vec<FittedClassifier>,
    },
    Constant(ConstantPredictor),
}

impl FittedPredictor {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Single(_) => "model",
            Self::Ensemble { .. } => "ensemble",
            Self::Constant(_) => "constant",
        }
    }
}

impl BinaryClassifier for FittedPredictor {
    fn dim(&self) -> usize {
        match self {
            Self::Single(m) => m.dim(),
            Self::Ensemble { members, .. } => members[0].dim(),
            Self::Constant(c) => c.dim(),
        }
    }

    fn predict_one(&self, x: &[f64]) -> u8 {
        match self {
            Self::Single(m) => m.predict_one(x),
            Self::Ensemble { rule: Rule::Or, members } => u8::from(members.iter().any(|m| m.predict_one(x) == 1)),
            Self::Ensemble {
                rule: Rule::MajorityVote,
                members,
            } => {
                let ones = members.iter().filter(|m| m.predict_one(x) == 1).count();
                u8::from(2 * ones > members.len())
            }
            Self::Constant(c) => c.label,
        }
    }
}

/// Fit a template on `train` as-is (no clustering).
pub fn fit_predictor(template: &PredictorTemplate, train: &Dataset, policy: TrainingPolicy) -> Result<FittedPredictor> {
    template.validate()?;
    match template {
        PredictorTemplate::Single(spec) => Ok(FittedPredictor::Single(fit_with_policy(spec, train, policy)?)),
        PredictorTemplate::Ensemble { spec, members } => {
            let fitted = members
                .par_iter()
                .map(|m| fit_with_policy(m, train, policy))
                .collect::<Result<Vec<_>>>()?;
            Ok(FittedPredictor::Ensemble {
                rule: spec.rule,
                members: fitted,
            })
        }
    }
}

/// Why a cluster cannot support a fitted predictor, if it cannot.
pub fn degenerate_cluster(counts: [usize; 2]) -> Option<(u8, ConstantReason)> {
    let size = counts[0] + counts[1];
    let majority = u8::from(counts[1] > counts[0]);
    if size == 0 {
        Some((0, ConstantReason::EmptyCluster))
    } else if counts[0] == 0 || counts[1] == 0 {
        Some((majority, ConstantReason::SingleClassCluster))
    } else if size < MIN_CLUSTER_SIZE {
        Some((majority, ConstantReason::SmallCluster))
    } else {
        None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub fraud_count: usize,
    pub predictor_kind: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedModel {
    pub kmeans: KMeansModel,
    /// One per cluster index.
    pub predictors: Vec<FittedPredictor>,
    pub summary: Vec<ClusterSummary>,
}

impl MixedModel {
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_summary_csv(&self.summary, path)
    }
}

pub fn write_summary_csv(summary: &[ClusterSummary], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cluster", "size", "fraud_count", "predictor_kind"])?;
    for s in summary {
        w.write_record([
            s.cluster.to_string(),
            s.size.to_string(),
            s.fraud_count.to_string(),
            s.predictor_kind.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Training-set indices per cluster, in original order.
pub fn partition(assignments: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(); k];
    for (i, &c) in assignments.iter().enumerate() {
        parts[c].push(i);
    }
    parts
}

pub fn fit_mixed(
    train: &Dataset,
    k: usize,
    template: &PredictorTemplate,
    seed: u64,
    policy: TrainingPolicy,
) -> Result<MixedModel> {
    template.validate()?;
    let kmeans = clustering::fit_kmeans(train, k, seed, clustering::DEFAULT_MAX_ITER, clustering::DEFAULT_TOL)?;
    let assignments = clustering::assign(&kmeans, train.features())?;
    let parts = partition(&assignments, k);
    let fitted: Vec<(FittedPredictor, ClusterSummary)> = parts
        .par_iter()
        .enumerate()
        .map(|(c, idx)| {
            let subset = train.subset(idx);
            let counts = subset.class_counts();
            let predictor = match degenerate_cluster(counts) {
                Some((label, reason)) => FittedPredictor::Constant(ConstantPredictor::new(label, reason, train.dim())),
                None => fit_predictor(template, &subset, policy)?,
            };
            let summary = ClusterSummary {
                cluster: c,
                size: idx.len(),
                fraud_count: counts[1],
                predictor_kind: match &predictor {
                    FittedPredictor::Constant(cp) => format!("constant_{}:{}", cp.label, cp.reason),
                    other => other.kind().to_string(),
                },
            };
            Ok((predictor, summary))
        })
        .collect::<Result<Vec<_>>>()?;
    let (predictors, summary) = fitted.into_iter().unzip();
    Ok(MixedModel {
        kmeans,
        predictors,
        summary,
    })
}

pub fn predict_mixed(model: &MixedModel, features: &Matrix) -> Result<Vec<u8>> {
    let routes = clustering::assign(&model.kmeans, features)?;
    if let Some(p) = model.predictors.iter().find(|p| p.dim() != features.cols()) {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: features.cols(),
        });
    }
    Ok(routes
        .par_iter()
        .enumerate()
        .map(|(i, &c)| model.predictors[c].predict_one(features.row(i)))
        .collect())
}
