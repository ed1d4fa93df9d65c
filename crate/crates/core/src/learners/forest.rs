use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Gini, GrowSettings, Tree};
use super::{ClassWeights, ModelSpec};
use crate::matrix::Matrix;
use crate::{mix_seed, seeded_rng};

pub(crate) struct Settings {
    pub trees: usize,
    pub grow: GrowSettings,
    pub seed: u64,
}

impl Settings {
    pub fn from_spec(spec: &ModelSpec, dim: usize) -> Self {
        let max_depth = spec.usize_param("max_depth");
        let max_features = match spec.usize_param("max_features") {
            0 => (dim as f64).sqrt().ceil() as usize,
            m => m,
        };
        Self {
            trees: spec.usize_param("trees"),
            grow: GrowSettings {
                max_depth: (max_depth > 0).then_some(max_depth),
                min_leaf: spec.usize_param("min_leaf"),
                max_features: Some(max_features.clamp(1, dim.max(1))),
            },
            seed: spec.seed,
        }
    }
}

/// Bagged Gini trees. Each tree casts one vote, decided by the weighted
/// majority in the leaf it routes the object to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<Tree>,
    /// Per-tree normalised impurity decrease, averaged over trees that split.
    importances: Vec<f64>,
    any_split: bool,
}

impl RandomForest {
    pub(crate) fn fit(x: &Matrix, labels: &[u8], weights: ClassWeights, settings: &Settings) -> Self {
        let n = x.rows();
        let d = x.cols();
        let grown: Vec<(Tree, Vec<f64>)> = (0..settings.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seeded_rng(mix_seed(settings.seed, t as u64));
                let mut multiplicity = vec![0u32; n];
                for _ in 0..n {
                    multiplicity[rng.gen_range(0..n)] += 1;
                }
                let sample_weights: Vec<f64> = (0..n)
                    .map(|i| f64::from(multiplicity[i]) * weights.of(labels[i]))
                    .collect();
                let samples: Vec<usize> = (0..n).filter(|&i| multiplicity[i] > 0).collect();
                let crit = Gini {
                    labels,
                    weights: &sample_weights,
                };
                let g = grow(x, samples, &crit, settings.grow, &mut rng);
                (g.tree, g.importance)
            })
            .collect();

        let mut importances = vec![0.0; d];
        let mut splitting = 0usize;
        let mut trees = Vec::with_capacity(grown.len());
        for (tree, imp) in grown {
            let total: f64 = imp.iter().sum();
            if total > 0.0 {
                splitting += 1;
                for (acc, v) in importances.iter_mut().zip(&imp) {
                    *acc += v / total;
                }
            }
            trees.push(tree);
        }
        if splitting > 0 {
            for v in importances.iter_mut() {
                *v /= splitting as f64;
            }
        }
        Self {
            trees,
            importances,
            any_split: splitting > 0,
        }
    }

    /// Fraction of trees voting fraud.
    pub fn score(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.value(x) >= 0.5).count();
        votes as f64 / self.trees.len() as f64
    }

    pub fn feature_importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn any_split(&self) -> bool {
        self.any_split
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
