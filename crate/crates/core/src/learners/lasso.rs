use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{FitError, OptimizerSettings, Result};
use crate::scalar::Scalar;

pub use super::logistic::soft_threshold;

/// A fitted L1-penalised linear regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel<F> {
    pub weights: Array1<F>,
    pub intercept: F,
    pub alpha: F,
    pub converged: bool,
    pub epochs: usize,
}

impl<F: Scalar> ContinuousModel<F> {
    pub fn predict(&self, x: ArrayView1<F>) -> Result<F> {
        if x.len() != self.weights.len() {
            return Err(FitError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.weights.dot(&x) + self.intercept)
    }

    pub fn predict_batch(&self, x: ArrayView2<F>) -> Result<Array1<F>> {
        if x.ncols() != self.weights.len() {
            return Err(FitError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.ncols(),
            });
        }
        Ok(x.dot(&self.weights) + self.intercept)
    }

    pub fn to_document(&self) -> LassoDocument {
        LassoDocument {
            model: "lasso".into(),
            weights: self.weights.iter().map(|v| v.as_f64()).collect(),
            intercept: self.intercept.as_f64(),
            alpha: self.alpha.as_f64(),
            converged: self.converged,
            epochs: self.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoDocument {
    pub model: String,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub converged: bool,
    pub epochs: usize,
}

/// Fits `min (1/2n)||y - Xw - b||^2 + alpha ||w||_1` by cyclic coordinate
/// descent with soft-thresholding. The intercept is unpenalised and is
/// recovered from the column means after solving the centred problem.
pub fn fit_lasso<F: Scalar>(x: ArrayView2<F>, y: &[F], alpha: F, opt: &OptimizerSettings) -> Result<ContinuousModel<F>> {
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(FitError::LengthMismatch { rows: n, targets: y.len() });
    }
    if n == 0 {
        return Err(FitError::Empty);
    }
    if !alpha.is_finite() || alpha < F::zero() {
        return Err(FitError::InvalidSetting("alpha must be finite and non-negative".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("features"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("targets"));
    }

    let nf = F::of(n as f64);
    let y_mean = y.iter().fold(F::zero(), |a, &v| a + v) / nf;
    // centred columns, stored contiguously per feature
    let mut x_mean = Array1::<F>::zeros(d);
    let mut cols: Vec<Vec<F>> = Vec::with_capacity(d);
    let mut sq_norm = Vec::with_capacity(d);
    for j in 0..d {
        let col = x.column(j);
        let mean = col.sum() / nf;
        x_mean[j] = mean;
        let c: Vec<F> = col.iter().map(|&v| v - mean).collect();
        sq_norm.push(c.iter().fold(F::zero(), |a, &v| a + v * v) / nf);
        cols.push(c);
    }
    let mut residual: Vec<F> = y.iter().map(|&v| v - y_mean).collect();
    let mut w = Array1::<F>::zeros(d);
    let tol = F::of(opt.cd_tolerance);
    let mut converged = false;
    let mut epochs = 0;

    while epochs < opt.cd_max_epochs {
        epochs += 1;
        let mut max_change = F::zero();
        for j in 0..d {
            if sq_norm[j] <= F::zero() {
                continue;
            }
            let col = &cols[j];
            let dot = col.iter().zip(&residual).fold(F::zero(), |a, (&c, &r)| a + c * r);
            let rho = dot / nf + sq_norm[j] * w[j];
            let updated = soft_threshold(rho, alpha) / sq_norm[j];
            let delta = updated - w[j];
            if delta != F::zero() {
                for (r, &c) in residual.iter_mut().zip(col) {
                    *r = *r - delta * c;
                }
                w[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= tol {
            converged = true;
            break;
        }
    }

    let intercept = y_mean - x_mean.dot(&w);
    Ok(ContinuousModel {
        weights: w,
        intercept,
        alpha,
        converged,
        epochs,
    })
}

/// Largest violation of the lasso optimality conditions at `model`:
/// `|g_j| <= alpha` where `w_j = 0` and `g_j = alpha * sign(w_j)`
/// otherwise, with `g = X^T (y - Xw - b) / n`.
pub fn kkt_violation<F: Scalar>(x: ArrayView2<F>, y: &[F], model: &ContinuousModel<F>) -> F {
    let n = F::of(y.len() as f64);
    let pred = x.dot(&model.weights);
    let residual: Array1<F> = y
        .iter()
        .zip(pred.iter())
        .map(|(&t, &p)| t - p - model.intercept)
        .collect();
    let mut worst = (residual.sum() / n).abs();
    for (j, &wj) in model.weights.iter().enumerate() {
        let g = x.column(j).dot(&residual) / n;
        let v = if wj == F::zero() {
            (g.abs() - model.alpha).max(F::zero())
        } else {
            (g - model.alpha * wj.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}
