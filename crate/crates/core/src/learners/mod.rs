//! Base classifiers behind one fit/predict contract.
//!
//! Every family exists in a classical form and a class-weighted form. The
//! class-weighted form scales each training object's contribution (loss term,
//! impurity mass or neighbour vote) by `n / (2 n_c)` for its class `c`.
//! All families decide `1` exactly when their score is at least 0.5.

mod boosting;
mod forest;
mod knn;
pub mod lbfgs;
mod logistic;
pub mod mlp;
mod naive_bayes;
mod spec;
mod tree;

use std::path::Path;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use boosting::GradientBoosting;
pub use forest::RandomForest;
pub use knn::KnnModel;
pub use logistic::LogisticModel;
pub use mlp::MlpModel;
pub use naive_bayes::GaussianNb;
pub use spec::{default_roster, Family, ModelSpec, Optimizer, Variant, ROSTER_ACRONYMS};

use crate::dataset::{self, class_counts, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DECISION_THRESHOLD: f64 = 0.5;

/// Per-class weights `w_c = n / (2 n_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { w0: 1.0, w1: 1.0 };

    #[inline]
    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.w1
        } else {
            self.w0
        }
    }

    pub fn sample_weights(&self, labels: &[u8]) -> Vec<f64> {
        labels.iter().map(|&l| self.of(l)).collect()
    }
}

pub fn compute_class_weights(labels: &[u8]) -> Result<ClassWeights> {
    let [n0, n1] = class_counts(labels);
    match (n0, n1) {
        (0, 0) => Err(Error::EmptyDataset),
        (0, _) => Err(Error::SingleClass(1)),
        (_, 0) => Err(Error::SingleClass(0)),
        _ => {
            let n = (n0 + n1) as f64;
            Ok(ClassWeights {
                w0: n / (2.0 * n0 as f64),
                w1: n / (2.0 * n1 as f64),
            })
        }
    }
}

/// Anything that labels a single feature vector.
pub trait BinaryClassifier: Send + Sync {
    fn dim(&self) -> usize;

    fn predict_one(&self, x: &[f64]) -> u8;

    fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        x.check_cols(self.dim())?;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| self.predict_one(x.row(i)))
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedState {
    Knn(KnnModel),
    NaiveBayes(GaussianNb),
    Logistic(LogisticModel),
    Forest(RandomForest),
    Boosting(GradientBoosting),
    Mlp(MlpModel),
    /// Training data held a single class.
    Constant(u8),
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedClassifier {
    pub spec: ModelSpec,
    pub state: FittedState,
    /// `[genuine, fraud]` counts seen during fitting.
    pub class_counts: [usize; 2],
    dim: usize,
    /// Training objective per optimizer iteration or boosting round
    /// (empty for families without one).
    loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PersistedModel {
    version: u32,
    model: FittedClassifier,
}

impl FittedClassifier {
    pub fn score_one(&self, x: &[f64]) -> f64 {
        match &self.state {
            FittedState::Knn(m) => m.score(x),
            FittedState::NaiveBayes(m) => m.score(x),
            FittedState::Logistic(m) => m.score(x),
            FittedState::Forest(m) => m.score(x),
            FittedState::Boosting(m) => m.score(x),
            FittedState::Mlp(m) => m.score(x),
            FittedState::Constant(l) => f64::from(*l),
        }
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let persisted = PersistedModel {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(std::io::BufWriter::new(file), &persisted)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let persisted: PersistedModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        if persisted.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!("unsupported model format version {}", persisted.version),
            });
        }
        Ok(persisted.model)
    }
}

impl BinaryClassifier for FittedClassifier {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_one(&self, x: &[f64]) -> u8 {
        u8::from(self.score_one(x) >= DECISION_THRESHOLD)
    }
}

pub fn fit_classifier(spec: &ModelSpec, train: &Dataset) -> Result<FittedClassifier> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = train.class_counts();
    let mut loss_trace = Vec::new();
    let state = if counts[0] == 0 || counts[1] == 0 {
        FittedState::Constant(u8::from(counts[1] > 0))
    } else {
        let weights = if spec.is_class_weighted() {
            compute_class_weights(train.labels())?
        } else {
            ClassWeights::UNIT
        };
        let x = train.features();
        let y = train.labels();
        match spec.family {
            Family::Knn => FittedState::Knn(KnnModel::fit(x, y, weights, spec.usize_param("k"))),
            Family::NaiveBayes => {
                FittedState::NaiveBayes(GaussianNb::fit(x, y, weights, spec.param("var_floor")))
            }
            Family::Logistic => {
                let (m, trace) = LogisticModel::fit(x, y, weights, &logistic::Settings::from_spec(spec))?;
                loss_trace = trace;
                FittedState::Logistic(m)
            }
            Family::RandomForest => FittedState::Forest(RandomForest::fit(
                x,
                y,
                weights,
                &forest::Settings::from_spec(spec, x.cols()),
            )),
            Family::GradientBoosting => {
                let (m, trace) =
                    GradientBoosting::fit(x, y, weights, &boosting::Settings::from_spec(spec))?;
                loss_trace = trace;
                FittedState::Boosting(m)
            }
            Family::Mlp => {
                let (m, trace) = MlpModel::fit(x, y, weights, &mlp::Settings::from_spec(spec)?)?;
                loss_trace = trace;
                FittedState::Mlp(m)
            }
        }
    };
    debug!("fitted {} on {} objects", spec.acronym(), train.len());
    Ok(FittedClassifier {
        spec: spec.clone(),
        state,
        class_counts: counts,
        dim: train.dim(),
        loss_trace,
    })
}

pub fn predict(model: &FittedClassifier, features: &Matrix) -> Result<Vec<u8>> {
    model.predict(features)
}

pub fn predict_score(model: &FittedClassifier, features: &Matrix) -> Result<Vec<f64>> {
    features.check_cols(model.dim)?;
    Ok((0..features.rows())
        .into_par_iter()
        .map(|i| model.score_one(features.row(i)))
        .collect())
}

/// How training data is prepared before a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPolicy {
    /// Oversample the minority class for classical variants; class-weighted
    /// variants always see the original data.
    pub rebalance_classical: bool,
}

impl Default for TrainingPolicy {
    fn default() -> Self {
        Self {
            rebalance_classical: true,
        }
    }
}

pub fn fit_with_policy(
    spec: &ModelSpec,
    train: &Dataset,
    policy: TrainingPolicy,
) -> Result<FittedClassifier> {
    let [n0, n1] = train.class_counts();
    if policy.rebalance_classical && !spec.is_class_weighted() && n0 > 0 && n1 > 0 {
        let balanced = dataset::rebalance(train, spec.seed)?;
        fit_classifier(spec, &balanced)
    } else {
        fit_classifier(spec, train)
    }
}

const CHUNK_ROWS: usize = 2048;

/// Fixed-size row ranges for parallel partial sums. Partials are combined in
/// chunk order, so results do not depend on the thread count.
pub(crate) fn row_chunks(
    n: usize,
) -> impl IndexedParallelIterator<Item = std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK_ROWS))
        .into_par_iter()
        .map(move |c| c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(n))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
