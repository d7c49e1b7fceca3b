//! L2-regularized logistic regression fit by damped Newton iterations.
//!
//! Objective: `Σ softplus(z_i) − y_i z_i + λ/2 ‖w‖²` with `z = w·x + b`; the
//! intercept is not penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2_lambda: f64,
    pub max_iters: usize,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { l2_lambda: 1.0, max_iters: 100, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub params: LogisticParams,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub warning: Option<String>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn score(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b
}

pub fn objective(x: &[Vec<f64>], y: &[u8], lambda: f64, w: &[f64], b: f64) -> f64 {
    let data: f64 = x.iter().zip(y).map(|(r, &l)| {
        let z = score(w, b, r);
        softplus(z) - f64::from(l) * z
    }).sum();
    data + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient as `[∂/∂w_1 .. ∂/∂w_d, ∂/∂b]`.
pub fn gradient(x: &[Vec<f64>], y: &[u8], lambda: f64, w: &[f64], b: f64) -> Vec<f64> {
    let d = w.len();
    let mut g = vec![0.0; d + 1];
    for (r, &l) in x.iter().zip(y) {
        let e = sigmoid(score(w, b, r)) - f64::from(l);
        for j in 0..d {
            g[j] += e * r[j];
        }
        g[d] += e;
    }
    for j in 0..d {
        g[j] += lambda * w[j];
    }
    g
}

impl LogisticModel {
    pub fn train(x: &[Vec<f64>], y: &[u8], params: &LogisticParams) -> Result<LogisticModel> {
        if x.is_empty() {
            return Err(Error::Empty("no training rows".into()));
        }
        if !(params.l2_lambda >= 0.0) {
            return Err(Error::invalid("l2_lambda must be non-negative"));
        }
        let d = x[0].len();
        if let Some(r) = x.iter().find(|r| r.len() != d) {
            return Err(Error::WidthMismatch { expected: d, found: r.len() });
        }
        let lambda = params.l2_lambda;
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut f = objective(x, y, lambda, &w, b);
        let mut g = gradient(x, y, lambda, &w, b);
        let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut iterations = 0;
        while norm(&g) > params.tol && iterations < params.max_iters {
            iterations += 1;
            let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
            for r in x {
                let p = sigmoid(score(&w, b, r));
                let s = p * (1.0 - p);
                for i in 0..=d {
                    let xi = if i < d { r[i] } else { 1.0 };
                    for j in 0..=i {
                        let xj = if j < d { r[j] } else { 1.0 };
                        h[(i, j)] += s * xi * xj;
                    }
                }
            }
            for i in 0..=d {
                for j in 0..i {
                    h[(j, i)] = h[(i, j)];
                }
                if i < d {
                    h[(i, i)] += lambda;
                }
            }
            let rhs = DVector::from_column_slice(&g);
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => {
                    let jitter = DMatrix::<f64>::identity(d + 1, d + 1) * 1e-8;
                    match (h + jitter).cholesky() {
                        Some(c) => c.solve(&rhs),
                        None => rhs.clone(),
                    }
                }
            };
            // Backtracking keeps the iteration monotone on nearly separable data.
            let slope: f64 = step.iter().zip(&g).map(|(s, gi)| s * gi).sum();
            let mut t = 1.0;
            loop {
                let nw: Vec<f64> = (0..d).map(|j| w[j] - t * step[j]).collect();
                let nb = b - t * step[d];
                let nf = objective(x, y, lambda, &nw, nb);
                if nf <= f - 1e-4 * t * slope || t < 1e-10 {
                    w = nw;
                    b = nb;
                    f = nf;
                    break;
                }
                t *= 0.5;
            }
            g = gradient(x, y, lambda, &w, b);
        }
        let gradient_norm = norm(&g);
        let converged = gradient_norm <= params.tol;
        let warning = (!converged).then(|| {
            format!("logistic regression stopped after {iterations} iterations with gradient norm {gradient_norm:e}")
        });
        if let Some(msg) = &warning {
            log::warn!("{msg}");
        }
        Ok(LogisticModel { params: *params, weights: w, intercept: b, iterations, gradient_norm, converged, warning })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        score(&self.weights, self.intercept, x)
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) > 0.5)
    }
}
