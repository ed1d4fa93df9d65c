use serde::{Deserialize, Serialize};

use super::ClassWeights;
use crate::matrix::Matrix;

/// Gaussian naive Bayes with per-class, per-feature mean and variance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianNb {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

impl GaussianNb {
    /// Variances are floored at `var_floor * max_j var_j` (or `var_floor`
    /// itself when every feature variance is zero).
    pub(crate) fn fit(x: &Matrix, labels: &[u8], weights: ClassWeights, var_floor: f64) -> Self {
        let d = x.cols();
        let mut mass = [0.0f64; 2];
        let mut sum = [vec![0.0; d], vec![0.0; d]];
        for (i, row) in x.iter_rows().enumerate() {
            let c = labels[i] as usize;
            let w = weights.of(labels[i]);
            mass[c] += w;
            for j in 0..d {
                sum[c][j] += w * row[j];
            }
        }
        let mean = [
            sum[0].iter().map(|s| s / mass[0]).collect::<Vec<_>>(),
            sum[1].iter().map(|s| s / mass[1]).collect::<Vec<_>>(),
        ];
        let mut var = [vec![0.0; d], vec![0.0; d]];
        for (i, row) in x.iter_rows().enumerate() {
            let c = labels[i] as usize;
            let w = weights.of(labels[i]);
            for j in 0..d {
                let dev = row[j] - mean[c][j];
                var[c][j] += w * dev * dev;
            }
        }
        for c in 0..2 {
            for v in var[c].iter_mut() {
                *v /= mass[c];
            }
        }

        // overall feature variance drives the floor
        let n = x.rows() as f64;
        let max_var = (0..d)
            .map(|j| {
                let col = x.column(j);
                let m = col.iter().sum::<f64>() / n;
                col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
            })
            .fold(0.0f64, f64::max);
        let floor = if max_var > 0.0 { var_floor * max_var } else { var_floor };
        for c in 0..2 {
            for v in var[c].iter_mut() {
                *v = v.max(floor);
            }
        }

        let total = mass[0] + mass[1];
        Self {
            log_prior: [(mass[0] / total).ln(), (mass[1] / total).ln()],
            mean,
            var,
        }
    }

    fn log_joint(&self, c: usize, x: &[f64]) -> f64 {
        let mut acc = self.log_prior[c];
        for (j, &v) in x.iter().enumerate() {
            let var = self.var[c][j];
            let dev = v - self.mean[c][j];
            acc -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + dev * dev / var);
        }
        acc
    }

    /// Posterior probability of fraud.
    pub fn score(&self, x: &[f64]) -> f64 {
        let l0 = self.log_joint(0, x);
        let l1 = self.log_joint(1, x);
        super::sigmoid(l1 - l0)
    }
}
