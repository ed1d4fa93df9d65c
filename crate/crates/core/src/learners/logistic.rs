use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{row_chunks, sigmoid, ClassWeights, ModelSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub(crate) struct Settings {
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Settings {
    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            lambda: spec.param("lambda"),
            learning_rate: spec.param("learning_rate"),
            max_iter: spec.usize_param("max_iter"),
            tol: spec.param("tol"),
        }
    }
}

/// Logistic regression fitted by weighted maximum likelihood.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    w: Vec<f64>,
    total_w: f64,
    lambda: f64,
}

impl Problem<'_> {
    /// Mean weighted log-likelihood minus the L2 penalty (intercept unpenalised).
    fn objective(&self, beta: &[f64]) -> f64 {
        let d = self.x.cols();
        let parts: Vec<f64> = row_chunks(self.x.rows())
            .map(|range| {
                range
                    .map(|i| {
                        let z = beta[d] + dot(&beta[..d], self.x.row(i));
                        self.w[i] * (f64::from(self.y[i]) * z - softplus(z))
                    })
                    .sum::<f64>()
            })
            .collect();
        parts.iter().sum::<f64>() / self.total_w - 0.5 * self.lambda * dot(&beta[..d], &beta[..d])
    }

    fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let d = self.x.cols();
        let parts: Vec<Vec<f64>> = row_chunks(self.x.rows())
            .map(|range| {
                let mut g = vec![0.0; d + 1];
                for i in range {
                    let row = self.x.row(i);
                    let z = beta[d] + dot(&beta[..d], row);
                    let r = self.w[i] * (f64::from(self.y[i]) - sigmoid(z));
                    for j in 0..d {
                        g[j] += r * row[j];
                    }
                    g[d] += r;
                }
                g
            })
            .collect();
        let mut g = vec![0.0; d + 1];
        for p in &parts {
            for (a, b) in g.iter_mut().zip(p) {
                *a += b;
            }
        }
        for j in 0..d {
            g[j] = g[j] / self.total_w - self.lambda * beta[j];
        }
        g[d] /= self.total_w;
        g
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MAX_HALVINGS: usize = 60;

impl LogisticModel {
    /// Batch gradient ascent. A step that would lower the objective is halved
    /// until it does not, so the returned trace is non-decreasing.
    pub(crate) fn fit(
        x: &Matrix,
        y: &[u8],
        weights: ClassWeights,
        settings: &Settings,
    ) -> Result<(Self, Vec<f64>)> {
        let w = weights.sample_weights(y);
        let total_w = w.iter().sum();
        let problem = Problem {
            x,
            y,
            w,
            total_w,
            lambda: settings.lambda,
        };
        let d = x.cols();
        let mut beta = vec![0.0; d + 1];
        let mut current = problem.objective(&beta);
        let mut trace = vec![current];
        for _ in 0..settings.max_iter {
            let g = problem.gradient(&beta);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("logistic regression gradient".into()));
            }
            if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < settings.tol {
                break;
            }
            let mut step = settings.learning_rate;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<f64> = beta.iter().zip(&g).map(|(b, gi)| b + step * gi).collect();
                let value = problem.objective(&cand);
                if !value.is_finite() {
                    return Err(Error::NonFinite("logistic regression objective".into()));
                }
                if value >= current {
                    accepted = Some((cand, value));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((cand, value)) => {
                    beta = cand;
                    current = value;
                    trace.push(current);
                }
                None => break,
            }
        }
        let intercept = beta[d];
        beta.truncate(d);
        Ok((
            Self {
                coefficients: beta,
                intercept,
            },
            trace,
        ))
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.intercept + dot(&self.coefficients, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_score_half() {
        let m = LogisticModel {
            coefficients: vec![0.0, 0.0],
            intercept: 0.0,
        };
        assert_eq!(m.score(&[3.0, -1.0]), 0.5);
    }

    #[test]
    fn trace_is_non_decreasing_with_aggressive_step() {
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| [(i % 7) as f64 * 3.0, (i % 5) as f64 * 2.0])
            .collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let settings = Settings {
            lambda: 0.01,
            learning_rate: 5.0,
            max_iter: 200,
            tol: 1e-9,
        };
        let (_, trace) = LogisticModel::fit(&x, &y, ClassWeights::UNIT, &settings).unwrap();
        assert!(trace.len() > 2);
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
