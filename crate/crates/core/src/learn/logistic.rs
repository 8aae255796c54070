use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sigmoid, TrainData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2_lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { l2_lambda: 1e-4, max_iter: 100, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Coefficients on the standardized scale.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub l2_lambda: f64,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    /// Untrained model: every prediction is 0.5.
    pub fn zero(p: usize) -> Self {
        LogisticModel {
            coefficients: vec![0.0; p],
            intercept: 0.0,
            l2_lambda: 0.0,
            means: vec![0.0; p],
            sds: vec![1.0; p],
            iterations: 0,
            converged: false,
        }
    }

    pub fn margin_row(&self, x: &[f64]) -> f64 {
        let mut z = self.intercept;
        for j in 0..x.len() {
            z += self.coefficients[j] * (x[j] - self.means[j]) / self.sds[j];
        }
        z
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin_row(x))
    }
}

/// Weighted mean negative log-likelihood plus (lambda/2)|beta|^2, where
/// `params[0]` is the unpenalized intercept and `x` is already standardized.
pub fn objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], params: &DVector<f64>, lambda: f64) -> f64 {
    let total: f64 = w.iter().sum();
    let mut nll = 0.0;
    for i in 0..x.nrows() {
        let z = margin(x, i, params);
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        nll += w[i] * (softplus - y[i] * z);
    }
    let beta = params.rows(1, params.len() - 1);
    nll / total + 0.5 * lambda * beta.norm_squared()
}

pub fn gradient(x: &DMatrix<f64>, y: &[f64], w: &[f64], params: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let total: f64 = w.iter().sum();
    let p = x.ncols();
    let mut g = DVector::zeros(p + 1);
    for i in 0..x.nrows() {
        let r = w[i] * (sigmoid(margin(x, i, params)) - y[i]) / total;
        g[0] += r;
        for j in 0..p {
            g[j + 1] += r * x[(i, j)];
        }
    }
    for j in 1..=p {
        g[j] += lambda * params[j];
    }
    g
}

fn hessian(x: &DMatrix<f64>, w: &[f64], params: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let total: f64 = w.iter().sum();
    let p = x.ncols();
    let mut h = DMatrix::zeros(p + 1, p + 1);
    let mut row = vec![1.0; p + 1];
    for i in 0..x.nrows() {
        let s = sigmoid(margin(x, i, params));
        let c = w[i] * s * (1.0 - s) / total;
        for j in 0..p {
            row[j + 1] = x[(i, j)];
        }
        for a in 0..=p {
            let ca = c * row[a];
            for b in a..=p {
                h[(a, b)] += ca * row[b];
            }
        }
    }
    for a in 0..=p {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
        if a > 0 {
            h[(a, a)] += lambda;
        }
    }
    h
}

fn margin(x: &DMatrix<f64>, i: usize, params: &DVector<f64>) -> f64 {
    let mut z = params[0];
    for j in 0..x.ncols() {
        z += params[j + 1] * x[(i, j)];
    }
    z
}

/// Weighted column means and standard deviations; constant columns get sd 1.
fn standardization(data: &TrainData) -> (Vec<f64>, Vec<f64>) {
    let total = data.total_weight();
    let p = data.matrix.n_cols();
    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    for (i, r) in data.matrix.rows().enumerate() {
        for j in 0..p {
            means[j] += data.weights[i] * r[j] / total;
        }
    }
    for (i, r) in data.matrix.rows().enumerate() {
        for j in 0..p {
            sds[j] += data.weights[i] * (r[j] - means[j]).powi(2) / total;
        }
    }
    for s in &mut sds {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    (means, sds)
}

/// Newton's method with step halving on the penalized weighted likelihood.
pub fn fit_logistic(data: &TrainData, cfg: &LogisticConfig) -> Result<LogisticModel> {
    if data.matrix.has_missing() {
        return Err(Error::Contract("logistic regression needs finite inputs".into()));
    }
    let n = data.n_rows();
    let p = data.matrix.n_cols();
    let (means, sds) = standardization(data);
    let x = DMatrix::from_fn(n, p, |i, j| (data.matrix.get(i, j) - means[j]) / sds[j]);
    let y: Vec<f64> = data.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let w = &data.weights;
    let lambda = cfg.l2_lambda;

    let mut params = DVector::zeros(p + 1);
    let mut f = objective(&x, &y, w, &params, lambda);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let g = gradient(&x, &y, w, &params, lambda);
        if g.norm() < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let h = hessian(&x, w, &params, lambda);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => h
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::Degenerate("singular Hessian in logistic fit".into()))?,
        };
        let mut t = 1.0;
        loop {
            let cand = &params - &step * t;
            let fc = objective(&x, &y, w, &cand, lambda);
            if fc <= f || t < 1e-10 {
                params = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    if !converged {
        log::warn!("logistic fit stopped after {iterations} iterations without meeting tol {}", cfg.tol);
    }
    Ok(LogisticModel {
        coefficients: params.iter().skip(1).copied().collect(),
        intercept: params[0],
        l2_lambda: lambda,
        means,
        sds,
        iterations,
        converged,
    })
}
