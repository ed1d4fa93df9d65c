//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LbfgsSettings {
    pub history: usize,
    pub max_iter: usize,
    /// Stop when the gradient max-norm falls below this.
    pub gtol: f64,
    /// Stop when the relative decrease of the objective falls below this.
    pub ftol: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self {
            history: 10,
            max_iter: 200,
            gtol: 1e-6,
            ftol: 1e-12,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

struct Eval {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
}

/// Minimise `objective`, which returns the value and gradient at a point.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, settings: &LbfgsSettings) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("L-BFGS initial point".into()));
    }
    let mut trace = vec![f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    while iterations < settings.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < settings.gtol {
            break;
        }
        let mut d = two_loop(&g, &memory);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            memory.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let alpha0 = if memory.is_empty() {
            (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
        } else {
            1.0
        };
        let found = line_search(&mut objective, &x, f, slope, &d, alpha0, settings)?;
        let Some(step) = found else {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };
        let s: Vec<f64> = d.iter().map(|v| step.alpha * v).collect();
        let y: Vec<f64> = step.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x = axpy(&x, step.alpha, &d);
        let previous = f;
        f = step.value;
        g = step.grad;
        iterations += 1;
        trace.push(f);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > settings.history {
                memory.pop_front();
            }
        }
        if (previous - f) <= settings.ftol * previous.abs().max(f.abs()).max(1.0) {
            break;
        }
    }
    Ok(LbfgsOutcome {
        x,
        value: f,
        iterations,
        trace,
    })
}

fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

const MAX_BRACKET: usize = 25;
const MAX_ZOOM: usize = 40;

/// Strong-Wolfe search along `d`. Returns `None` when no decrease is found.
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    alpha0: f64,
    settings: &LbfgsSettings,
) -> Result<Option<Eval>>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut eval = |alpha: f64| -> Eval {
        let (value, grad) = objective(&axpy(x, alpha, d));
        Eval { alpha, value, grad }
    };
    let armijo = |e: &Eval| e.value <= f0 + settings.c1 * e.alpha * slope0;
    let curvature = |e: &Eval| dot(&e.grad, d).abs() <= -settings.c2 * slope0;

    let placeholder = || Eval {
        alpha: 0.0,
        value: f0,
        grad: Vec::new(),
    };
    let mut prev = placeholder();
    let mut alpha = alpha0;
    let mut bracket = None;
    for i in 0..MAX_BRACKET {
        let cur = eval(alpha);
        if !cur.value.is_finite() || cur.grad.iter().any(|v| !v.is_finite()) {
            // overshoot into an overflow region; pull back
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if !armijo(&cur) || (i > 0 && cur.value >= prev.value) {
            bracket = Some((std::mem::replace(&mut prev, placeholder()), cur));
            break;
        }
        if curvature(&cur) {
            return Ok(Some(cur));
        }
        if dot(&cur.grad, d) >= 0.0 {
            bracket = Some((cur, std::mem::replace(&mut prev, placeholder())));
            break;
        }
        alpha *= 2.0;
        prev = cur;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok((prev.alpha > 0.0).then_some(prev));
    };
    for _ in 0..MAX_ZOOM {
        let mid = eval(0.5 * (lo.alpha + hi.alpha));
        if !mid.value.is_finite() {
            hi = mid;
            continue;
        }
        if !armijo(&mid) || mid.value >= lo.value {
            hi = mid;
        } else {
            if curvature(&mid) {
                return Ok(Some(mid));
            }
            if dot(&mid.grad, d) * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = mid;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 {
            break;
        }
    }
    // lo always satisfies sufficient decrease once it has moved off zero
    Ok((lo.alpha > 0.0 && lo.value < f0).then_some(lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let rosen = |p: &[f64]| {
            let (x, y) = (p[0], p[1]);
            let f = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
            let g = vec![
                -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                200.0 * (y - x * x),
            ];
            (f, g)
        };
        let settings = LbfgsSettings {
            max_iter: 500,
            gtol: 1e-10,
            ..Default::default()
        };
        let out = minimize(rosen, vec![-1.2, 1.0], &settings).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-5, "{:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-5);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_converges_fast() {
        let quad = |p: &[f64]| {
            let f = 0.5 * (p[0] * p[0] + 10.0 * p[1] * p[1]) - p[0];
            (f, vec![p[0] - 1.0, 10.0 * p[1]])
        };
        let out = minimize(quad, vec![5.0, 5.0], &LbfgsSettings::default()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!(out.x[1].abs() < 1e-6);
        assert!(out.iterations < 30);
    }
}
