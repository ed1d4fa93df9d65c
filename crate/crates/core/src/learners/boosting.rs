use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowSettings, LeastSquares, Tree};
use super::{sigmoid, ClassWeights, ModelSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeded_rng;

pub(crate) struct Settings {
    pub rounds: usize,
    pub learning_rate: f64,
    pub grow: GrowSettings,
    pub seed: u64,
}

impl Settings {
    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            rounds: spec.usize_param("rounds"),
            learning_rate: spec.param("learning_rate"),
            grow: GrowSettings {
                max_depth: Some(spec.usize_param("max_depth")),
                min_leaf: spec.usize_param("min_leaf"),
                max_features: None,
            },
            seed: spec.seed,
        }
    }
}

/// Additive logistic model: `F(x) = F0 + sum_t tree_t(x)` with Newton leaf
/// values shrunk by the learning rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientBoosting {
    init: f64,
    trees: Vec<Tree>,
}

#[inline]
fn logistic_loss(f: f64, y: u8) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p() - f64::from(y) * f
}

const MAX_SHRINKS: usize = 40;

impl GradientBoosting {
    /// Returns the model and the weighted mean logistic loss before the first
    /// round and after every round. Each leaf step is shrunk until the loss on
    /// that leaf's objects does not increase, so the trace never rises.
    pub(crate) fn fit(
        x: &Matrix,
        labels: &[u8],
        weights: ClassWeights,
        settings: &Settings,
    ) -> Result<(Self, Vec<f64>)> {
        let n = x.rows();
        let w = weights.sample_weights(labels);
        let total_w: f64 = w.iter().sum();
        let pos: f64 = (0..n).filter(|&i| labels[i] == 1).map(|i| w[i]).sum();
        let init = (pos / (total_w - pos)).ln();
        let mut f = vec![init; n];
        let mean_loss = |f: &[f64]| -> f64 {
            (0..n).map(|i| w[i] * logistic_loss(f[i], labels[i])).sum::<f64>() / total_w
        };
        let mut trace = vec![mean_loss(&f)];
        let mut trees = Vec::with_capacity(settings.rounds);
        let mut rng = seeded_rng(settings.seed);
        let mut residual = vec![0.0; n];

        for _ in 0..settings.rounds {
            for i in 0..n {
                residual[i] = f64::from(labels[i]) - sigmoid(f[i]);
            }
            let crit = LeastSquares {
                targets: &residual,
                weights: &w,
            };
            let mut grown = grow(x, (0..n).collect(), &crit, settings.grow, &mut rng);
            for (node, members) in &grown.leaf_samples {
                let (mut num, mut den) = (0.0, 0.0);
                for &i in members {
                    let p = sigmoid(f[i]);
                    num += w[i] * residual[i];
                    den += w[i] * p * (1.0 - p);
                }
                let mut step = if den > 1e-150 {
                    settings.learning_rate * num / den
                } else {
                    0.0
                };
                if !step.is_finite() {
                    return Err(Error::NonFinite("boosting leaf value".into()));
                }
                let before: f64 = members
                    .iter()
                    .map(|&i| w[i] * logistic_loss(f[i], labels[i]))
                    .sum();
                let mut shrinks = 0;
                loop {
                    let after: f64 = members
                        .iter()
                        .map(|&i| w[i] * logistic_loss(f[i] + step, labels[i]))
                        .sum();
                    if after <= before {
                        break;
                    }
                    shrinks += 1;
                    if shrinks > MAX_SHRINKS {
                        step = 0.0;
                        break;
                    }
                    step *= 0.5;
                }
                for &i in members {
                    f[i] += step;
                }
                grown.tree.set_leaf_value(*node, step);
            }
            trees.push(grown.tree);
            let loss = mean_loss(&f);
            if !loss.is_finite() {
                return Err(Error::NonFinite("boosting training loss".into()));
            }
            trace.push(loss);
        }
        Ok((Self { init, trees }, trace))
    }

    pub fn raw(&self, x: &[f64]) -> f64 {
        self.init + self.trees.iter().map(|t| t.value(x)).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Family, Variant};

    #[test]
    fn loss_trace_non_increasing_both_variants() {
        let rows: Vec<[f64; 2]> = (0..120)
            .map(|i| [((i * 37) % 101) as f64 / 101.0, ((i * 53) % 97) as f64 / 97.0])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + 0.3 * r[1] > 0.9)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        for variant in [Variant::Classical, Variant::ClassWeighted] {
            let spec = ModelSpec::new(Family::GradientBoosting, variant).with_param("rounds", 30.0);
            let weights = if variant == Variant::ClassWeighted {
                crate::learners::compute_class_weights(&labels).unwrap()
            } else {
                ClassWeights::UNIT
            };
            let (m, trace) = GradientBoosting::fit(&x, &labels, weights, &Settings::from_spec(&spec)).unwrap();
            assert_eq!(trace.len(), 31);
            assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
            assert!(trace[30] < trace[0]);
            assert!(m.score(&[0.99, 0.99]) > 0.5);
        }
    }

    #[test]
    fn balanced_weights_start_at_zero_margin() {
        let x = Matrix::from_rows(&[[0.0], [0.1], [0.2], [1.0]]).unwrap();
        let labels = [0, 0, 0, 1];
        let w = crate::learners::compute_class_weights(&labels).unwrap();
        let spec = ModelSpec::new(Family::GradientBoosting, Variant::ClassWeighted).with_param("rounds", 1.0);
        let (m, _) = GradientBoosting::fit(&x, &labels, w, &Settings::from_spec(&spec)).unwrap();
        assert!(m.init.abs() < 1e-12);
    }
}
