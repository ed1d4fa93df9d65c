use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ClassWeights;
use crate::matrix::{squared_distance, Matrix};

/// Stores the training set; votes among the `k` nearest neighbours.
///
/// Each neighbour votes with its class weight (unit weights for the classical
/// variant). Equal distances at the k-th place prefer fraud neighbours and
/// equal vote totals resolve to fraud.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    points: Matrix,
    labels: Vec<u8>,
    weights: ClassWeights,
    k: usize,
}

impl KnnModel {
    pub(crate) fn fit(x: &Matrix, labels: &[u8], weights: ClassWeights, k: usize) -> Self {
        Self {
            points: x.clone(),
            labels: labels.to_vec(),
            weights,
            k,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Neighbour indices in order of (distance, fraud first, index); `k` is
    /// clamped to the training size.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let n = self.labels.len();
        let k = self.k.min(n);
        let mut cand: Vec<(f64, u8, usize)> = (0..n)
            .map(|i| (squared_distance(x, self.points.row(i)), self.labels[i], i))
            .collect();
        let cmp = |a: &(f64, u8, usize), b: &(f64, u8, usize)| -> Ordering {
            a.0.total_cmp(&b.0)
                .then_with(|| b.1.cmp(&a.1))
                .then_with(|| a.2.cmp(&b.2))
        };
        if k < n {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        cand.sort_unstable_by(cmp);
        cand.into_iter().map(|c| c.2).collect()
    }

    /// Weighted fraud share of the neighbour vote.
    pub fn score(&self, x: &[f64]) -> f64 {
        let (mut v0, mut v1) = (0.0, 0.0);
        for i in self.neighbours(x) {
            if self.labels[i] == 1 {
                v1 += self.weights.w1;
            } else {
                v0 += self.weights.w0;
            }
        }
        if v1 >= v0 {
            // ties land exactly on the threshold and resolve to fraud
            (v1 / (v0 + v1)).max(0.5)
        } else {
            (v1 / (v0 + v1)).min(0.5 - f64::EPSILON)
        }
    }
}
