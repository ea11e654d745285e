//! Maximum-likelihood logistic regression by Newton-Raphson. Used for the
//! calibration statistics and the coefficient-drift heuristic; the Bayesian
//! fits go through the sampler.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::inv_logit;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub iterations: usize,
}

/// Fits `logit P(y=1) = offset + X b`. `rows` must already contain an
/// intercept column if one is wanted.
pub fn fit_logistic(rows: &[Vec<f64>], y: &[bool], offset: Option<&[f64]>) -> Result<LogisticFit> {
    let n = rows.len();
    if n != y.len() {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if n == 0 {
        return Err(Error::EmptyInput("logistic regression without rows".into()));
    }
    let p = rows[0].len();
    let mut beta = DVector::<f64>::zeros(p);
    let mut info = DMatrix::<f64>::zeros(p, p);
    for iter in 1..=100 {
        let mut grad = DVector::<f64>::zeros(p);
        info.fill(0.0);
        for (i, row) in rows.iter().enumerate() {
            let eta = offset.map_or(0.0, |o| o[i]) + row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum::<f64>();
            let mu = inv_logit(eta);
            let w = mu * (1.0 - mu);
            let r = if y[i] { 1.0 } else { 0.0 } - mu;
            for a in 0..p {
                grad[a] += row[a] * r;
                for b in a..p {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let chol = info.clone().cholesky().ok_or(Error::DegeneratePredictions)?;
        let step = chol.solve(&grad);
        beta += &step;
        if beta.iter().any(|b| !b.is_finite() || b.abs() > 1e6) {
            return Err(Error::DegeneratePredictions);
        }
        if step.amax() < 1e-10 {
            let cov = chol.inverse();
            return Ok(LogisticFit {
                coefficients: beta.iter().copied().collect(),
                standard_errors: (0..p).map(|k| cov[(k, k)].sqrt()).collect(),
                iterations: iter,
            });
        }
    }
    Err(Error::DegeneratePredictions)
}
