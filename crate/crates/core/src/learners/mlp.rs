//! Single-hidden-layer perceptron: ReLU hidden units, sigmoid output,
//! (optionally class-weighted) cross-entropy loss.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{self, LbfgsSettings};
use super::{row_chunks, sigmoid, ClassWeights, ModelSpec, Optimizer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeded_rng;

pub(crate) struct Settings {
    pub optimizer: Optimizer,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iter: usize,
    pub history: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Settings {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let optimizer = spec
            .optimizer
            .ok_or_else(|| Error::InvalidParameter("MLP spec without optimizer".into()))?;
        Ok(Self {
            optimizer,
            hidden: spec.usize_param("hidden"),
            epochs: spec.usize_param("epochs"),
            learning_rate: spec.param("learning_rate"),
            batch_size: spec.usize_param("batch_size"),
            max_iter: spec.usize_param("max_iter"),
            history: spec.usize_param("history"),
            l2: spec.param("l2"),
            seed: spec.seed,
        })
    }
}

/// Network shape and flat parameter layout:
/// `[W1 (hidden x dim, row-major) | b1 (hidden) | w2 (hidden) | b2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub dim: usize,
    pub hidden: usize,
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Network {
    pub fn new(dim: usize, hidden: usize) -> Self {
        Self { dim, hidden }
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.dim + 2 * self.hidden + 1
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))` per layer, zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        let mut p = vec![0.0; self.n_params()];
        let a1 = (6.0 / (self.dim + self.hidden) as f64).sqrt();
        let a2 = (6.0 / (self.hidden + 1) as f64).sqrt();
        let (w1, rest) = p.split_at_mut(self.hidden * self.dim);
        for v in w1.iter_mut() {
            *v = rng.gen_range(-a1..=a1);
        }
        let w2 = &mut rest[self.hidden..2 * self.hidden];
        for v in w2.iter_mut() {
            *v = rng.gen_range(-a2..=a2);
        }
        p
    }

    /// Output logit for one object.
    pub fn logit(&self, params: &[f64], x: &[f64]) -> f64 {
        let (h, d) = (self.hidden, self.dim);
        let b1 = &params[h * d..h * d + h];
        let w2 = &params[h * d + h..h * d + 2 * h];
        let mut o = params[h * d + 2 * h];
        for k in 0..h {
            let row = &params[k * d..(k + 1) * d];
            let a = b1[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            if a > 0.0 {
                o += w2[k] * a;
            }
        }
        o
    }

    fn penalty(&self, params: &[f64], l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        let (h, d) = (self.hidden, self.dim);
        let w1: f64 = params[..h * d].iter().map(|v| v * v).sum();
        let w2: f64 = params[h * d + h..h * d + 2 * h].iter().map(|v| v * v).sum();
        0.5 * l2 * (w1 + w2)
    }

    /// `(1/|B|) sum_i w_i * CE(y_i, sigmoid(o_i)) + l2/2 * |W|^2` over `rows`.
    pub fn loss(&self, params: &[f64], x: &Matrix, y: &[u8], w: &[f64], rows: &[usize], l2: f64) -> f64 {
        let total: f64 = rows
            .iter()
            .map(|&i| {
                let o = self.logit(params, x.row(i));
                w[i] * (softplus(o) - f64::from(y[i]) * o)
            })
            .sum();
        total / rows.len() as f64 + self.penalty(params, l2)
    }

    /// Loss and its gradient by backpropagation over `rows`.
    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        x: &Matrix,
        y: &[u8],
        w: &[f64],
        rows: &[usize],
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let mut hidden_pre = vec![0.0; self.hidden];
        let loss = self.accumulate(params, x, y, w, rows.iter().copied(), rows.len() as f64, &mut grad, &mut hidden_pre);
        self.add_penalty_grad(params, l2, &mut grad);
        (loss + self.penalty(params, l2), grad)
    }

    /// Full-data loss and gradient, summed over fixed row chunks in parallel.
    fn full_loss_and_gradient(&self, params: &[f64], x: &Matrix, y: &[u8], w: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let n = x.rows() as f64;
        let parts: Vec<(f64, Vec<f64>)> = row_chunks(x.rows())
            .map(|range| {
                let mut grad = vec![0.0; self.n_params()];
                let mut hidden_pre = vec![0.0; self.hidden];
                let l = self.accumulate(params, x, y, w, range, n, &mut grad, &mut hidden_pre);
                (l, grad)
            })
            .collect();
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        self.add_penalty_grad(params, l2, &mut grad);
        (loss + self.penalty(params, l2), grad)
    }

    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &self,
        params: &[f64],
        x: &Matrix,
        y: &[u8],
        w: &[f64],
        rows: impl Iterator<Item = usize>,
        denom: f64,
        grad: &mut [f64],
        hidden_pre: &mut [f64],
    ) -> f64 {
        let (h, d) = (self.hidden, self.dim);
        let b1 = &params[h * d..h * d + h];
        let w2 = &params[h * d + h..h * d + 2 * h];
        let b2 = params[h * d + 2 * h];
        let mut loss = 0.0;
        for i in rows {
            let xi = x.row(i);
            let mut o = b2;
            for k in 0..h {
                let row = &params[k * d..(k + 1) * d];
                let a = b1[k] + row.iter().zip(xi).map(|(wt, v)| wt * v).sum::<f64>();
                hidden_pre[k] = a;
                if a > 0.0 {
                    o += w2[k] * a;
                }
            }
            let yi = f64::from(y[i]);
            loss += w[i] * (softplus(o) - yi * o) / denom;
            let delta = w[i] * (sigmoid(o) - yi) / denom;
            grad[h * d + 2 * h] += delta;
            for k in 0..h {
                let a = hidden_pre[k];
                if a > 0.0 {
                    grad[h * d + h + k] += delta * a;
                    let dh = delta * w2[k];
                    grad[h * d + k] += dh;
                    let g_row = &mut grad[k * d..(k + 1) * d];
                    for (g, v) in g_row.iter_mut().zip(xi) {
                        *g += dh * v;
                    }
                }
            }
        }
        loss
    }

    fn add_penalty_grad(&self, params: &[f64], l2: f64, grad: &mut [f64]) {
        if l2 == 0.0 {
            return;
        }
        let (h, d) = (self.hidden, self.dim);
        for j in 0..h * d {
            grad[j] += l2 * params[j];
        }
        for j in h * d + h..h * d + 2 * h {
            grad[j] += l2 * params[j];
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    network: Network,
    params: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl MlpModel {
    /// Returns the model and the full-data training loss before training and
    /// after every epoch (Adam) or accepted quasi-Newton step (L-BFGS).
    pub(crate) fn fit(x: &Matrix, y: &[u8], weights: ClassWeights, settings: &Settings) -> Result<(Self, Vec<f64>)> {
        let network = Network::new(x.cols(), settings.hidden);
        let w = weights.sample_weights(y);
        let params = network.init(settings.seed);
        let (params, trace) = match settings.optimizer {
            Optimizer::AdamSgd => adam(&network, params, x, y, &w, settings)?,
            Optimizer::Lbfgs => {
                let lb = LbfgsSettings {
                    history: settings.history,
                    max_iter: settings.max_iter,
                    gtol: 1e-5,
                    ftol: 1e-10,
                    ..Default::default()
                };
                let out = lbfgs::minimize(
                    |p| network.full_loss_and_gradient(p, x, y, &w, settings.l2),
                    params,
                    &lb,
                )?;
                (out.x, out.trace)
            }
        };
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP weights".into()));
        }
        Ok((Self { network, params }, trace))
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.network.logit(&self.params, x))
    }

    pub fn network(&self) -> Network {
        self.network
    }
}

fn adam(
    network: &Network,
    mut params: Vec<f64>,
    x: &Matrix,
    y: &[u8],
    w: &[f64],
    settings: &Settings,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    let mut rng = seeded_rng(crate::mix_seed(settings.seed, 0xADA));
    let mut order: Vec<usize> = (0..n).collect();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut t = 0i32;
    let full = |p: &[f64]| network.full_loss_and_gradient(p, x, y, w, settings.l2).0;
    let mut trace = vec![full(&params)];
    for _ in 0..settings.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(settings.batch_size) {
            let (_, g) = network.loss_and_gradient(&params, x, y, w, batch, settings.l2);
            t += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(t);
            let bc2 = 1.0 - ADAM_BETA2.powi(t);
            for j in 0..params.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                params[j] -= settings.learning_rate * (m[j] / bc1) / ((v[j] / bc2).sqrt() + ADAM_EPS);
            }
        }
        let loss = full(&params);
        if !loss.is_finite() {
            return Err(Error::NonFinite("MLP training loss".into()));
        }
        trace.push(loss);
    }
    Ok((params, trace))
}
