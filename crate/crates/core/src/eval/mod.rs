//! Metrics, stratified k-fold evaluation, holdout hyperparameter search and
//! sorted result reports.

mod folds;
mod metrics;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use folds::{complement, stratified_folds};
pub use metrics::{confusion, metrics, ConfusionCounts, MetricsRow};
pub use report::{build_report, compare_rows, EvaluationReport, ReportRow};

use crate::dataset::{apply_scaler, fit_scaler, split_holdout, Dataset};
use crate::error::{Error, Result};
use crate::learners::{fit_with_policy, BinaryClassifier, ModelSpec, TrainingPolicy};
use crate::mixed::{fit_mixed, fit_predictor, predict_mixed, PredictorTemplate};

/// What `kfold_evaluate` fits on each training fold.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    Flat(PredictorTemplate),
    Mixed { k: usize, template: PredictorTemplate },
}

impl EvalTarget {
    pub fn label(&self) -> String {
        match self {
            Self::Flat(t) => t.label(),
            Self::Mixed { k, template } => format!("{} (k={k})", template.label()),
        }
    }

    /// Fit on `train`, label `test`.
    pub fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64, policy: TrainingPolicy) -> Result<Vec<u8>> {
        match self {
            Self::Flat(t) => fit_predictor(t, train, policy)?.predict(test.features()),
            Self::Mixed { k, template } => {
                let model = fit_mixed(train, *k, template, seed, policy)?;
                predict_mixed(&model, test.features())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KFoldOptions {
    pub folds: usize,
    pub seed: u64,
    /// Fit a min-max scaler on each training fold and apply it to both sides.
    pub scale: bool,
    pub policy: TrainingPolicy,
}

impl Default for KFoldOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            scale: true,
            policy: TrainingPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldResult {
    pub fold_counts: Vec<ConfusionCounts>,
    pub fold_metrics: Vec<MetricsRow>,
    /// Pooled counts over all folds.
    pub counts: ConfusionCounts,
    pub aggregate: MetricsRow,
}

pub fn kfold_evaluate(target: &EvalTarget, data: &Dataset, options: &KFoldOptions) -> Result<KFoldResult> {
    let folds = stratified_folds(data.labels(), options.folds, options.seed)?;
    let fold_counts = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let mut train = data.subset(&complement(&folds, f));
            let mut test = data.subset(&folds[f]);
            if options.scale {
                let scaler = fit_scaler(&train)?;
                train = apply_scaler(&scaler, &train)?;
                test = apply_scaler(&scaler, &test)?;
            }
            let predicted = target.fit_predict(&train, &test, options.seed, options.policy)?;
            confusion(&predicted, test.labels())
        })
        .collect::<Result<Vec<_>>>()?;
    let counts: ConfusionCounts = fold_counts.iter().copied().sum();
    Ok(KFoldResult {
        fold_metrics: fold_counts.iter().map(metrics).collect(),
        fold_counts,
        counts,
        aggregate: metrics(&counts),
    })
}

/// Hyperparameter candidates: Cartesian product in key order, last key
/// varying fastest.
pub fn grid_candidates(grid: &BTreeMap<String, Vec<f64>>, template: &ModelSpec) -> Result<Vec<ModelSpec>> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Error::InvalidParameter("hyperparameter grid is empty".into()));
    }
    let mut out = vec![template.clone()];
    for (key, values) in grid {
        out = out
            .into_iter()
            .flat_map(|spec| values.iter().map(move |&v| spec.clone().with_param(key, v)))
            .collect();
    }
    for spec in &out {
        spec.validate()?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: ModelSpec,
    pub f1: Option<f64>,
    /// Every candidate with its holdout F1, in grid order.
    pub candidates: Vec<(ModelSpec, Option<f64>)>,
}

/// Exhaustive grid search scored by holdout F1. Undefined F1 ranks below
/// every defined value; the first candidate wins ties.
pub fn holdout_search(
    grid: &BTreeMap<String, Vec<f64>>,
    template: &ModelSpec,
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
    policy: TrainingPolicy,
) -> Result<SearchOutcome> {
    let candidates = grid_candidates(grid, template)?;
    let split = split_holdout(data, test_fraction, seed)?;
    let (train, test) = split.apply(data);
    let scores = candidates
        .par_iter()
        .map(|spec| {
            let model = fit_with_policy(spec, &train, policy)?;
            let predicted = model.predict(test.features())?;
            Ok(metrics(&confusion(&predicted, test.labels())?).f1)
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        let current = scores[best].unwrap_or(f64::NEG_INFINITY);
        if s.unwrap_or(f64::NEG_INFINITY) > current {
            best = i;
        }
    }
    Ok(SearchOutcome {
        best: candidates[best].clone(),
        f1: scores[best],
        candidates: candidates.into_iter().zip(scores).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Family, Variant};
    use crate::matrix::Matrix;

    fn blobs(n: usize) -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let fraud = i % 10 == 0;
            let base = if fraud { 3.0 } else { 0.0 };
            let a = (i * 7919 % 101) as f64 / 101.0;
            let b = (i * 104729 % 103) as f64 / 103.0;
            rows.push(vec![base + a, base + b]);
            labels.push(u8::from(fraud));
        }
        Dataset::from_parts(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn grid_order_last_key_fastest() {
        let mut grid = BTreeMap::new();
        grid.insert("a".to_string(), vec![1.0, 2.0]);
        grid.insert("b".to_string(), vec![10.0, 20.0]);
        let spec = ModelSpec::new(Family::GradientBoosting, Variant::Classical);
        let c = grid_candidates(&grid, &spec);
        // unknown keys are rejected by validation
        assert!(c.is_err());
        let mut grid = BTreeMap::new();
        grid.insert("learning_rate".to_string(), vec![0.1, 0.2]);
        grid.insert("rounds".to_string(), vec![10.0, 20.0]);
        let c = grid_candidates(&grid, &spec).unwrap();
        let pairs: Vec<(f64, f64)> = c.iter().map(|s| (s.param("learning_rate"), s.param("rounds"))).collect();
        assert_eq!(pairs, vec![(0.1, 10.0), (0.1, 20.0), (0.2, 10.0), (0.2, 20.0)]);
        assert!(grid_candidates(&BTreeMap::new(), &spec).is_err());
    }

    #[test]
    fn knn_search_prefers_small_k() {
        let data = blobs(600);
        let mut grid = BTreeMap::new();
        grid.insert("k".to_string(), vec![1.0, 500.0]);
        let spec = ModelSpec::new(Family::Knn, Variant::Classical);
        let no_rebalance = TrainingPolicy {
            rebalance_classical: false,
        };
        let out = holdout_search(&grid, &spec, &data, 0.2, 1, no_rebalance).unwrap();
        assert_eq!(out.best.param("k"), 1.0);
        let top = out.candidates.iter().map(|(_, f)| f.unwrap_or(f64::NEG_INFINITY)).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.f1.unwrap(), top);
        assert!(out.candidates[1].1.unwrap_or(0.0) < out.candidates[0].1.unwrap());
    }

    #[test]
    fn kfold_pools_counts() {
        let data = blobs(100);
        let target = EvalTarget::Flat(PredictorTemplate::Single(ModelSpec::new(Family::NaiveBayes, Variant::Classical)));
        let r = kfold_evaluate(&target, &data, &KFoldOptions { folds: 5, ..Default::default() }).unwrap();
        assert_eq!(r.fold_counts.len(), 5);
        assert_eq!(r.counts.total(), 100);
        let summed: ConfusionCounts = r.fold_counts.iter().copied().sum();
        assert_eq!(summed, r.counts);
    }
}
