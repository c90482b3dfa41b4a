//! Closed-form ridge regression with an unpenalized bias.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub fitted: bool,
}

fn design<R: AsRef<[f64]>>(x: &[R]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let p = x.first().map(|r| r.as_ref().len()).unwrap_or(0);
    if x.iter().any(|r| r.as_ref().len() != p) {
        return Err(Error::Dimension("ragged design matrix".into()));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| x[i].as_ref()[j]))
}

/// Solves the symmetric positive semi-definite system `a · w = b`.
fn solve_spd(a: DMatrix<f64>, b: DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        let w = chol.solve(&b);
        // guard against a factorization that succeeded on a numerically singular matrix
        let diag_min = chol.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let diag_max = chol.l().diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if diag_min > 1e-7 * diag_max && w.iter().all(|v| v.is_finite()) {
            return Ok(w);
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::Solver(format!(
            "normal equations are singular at λ = {lambda}; use λ > 0"
        )));
    }
    svd.solve(&b, 0.0).map_err(|e| Error::Solver(e.to_string()))
}

impl RidgeModel {
    /// `w = (XᵀX + λI)⁻¹ Xᵀ(y − ȳ)`, `b = ȳ`. `x` is expected to be standardized.
    pub fn fit<R: AsRef<[f64]>>(x: &[R], y: &[f64], lambda: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!("{} rows vs {} targets", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::Data("ridge fit needs at least 2 samples".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!("λ = {lambda} must be ≥ 0")));
        }
        let xm = design(x)?;
        let p = xm.ncols();
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
        let a = xm.transpose() * &xm + DMatrix::identity(p, p) * lambda;
        let b = xm.transpose() * yc;
        let w = solve_spd(a, b, lambda)?;
        Ok(Self {
            weights: w.iter().copied().collect(),
            bias: y_mean,
            lambda,
            fitted: true,
        })
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if !self.fitted {
            return Err(Error::State("ridge model used before fitting".into()));
        }
        if x.len() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "expected {} features, got {}",
                self.weights.len(),
                x.len()
            )));
        }
        Ok(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }

    pub fn predict<R: AsRef<[f64]>>(&self, x: &[R]) -> Result<Vec<f64>> {
        x.iter().map(|r| self.predict_one(r.as_ref())).collect()
    }

    /// Trainable scalars: weights plus bias.
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + 1
    }
}

fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    (pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

/// Result of a validation sweep over λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// `(λ, validation RMSE)` for every grid entry.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the λ with the lowest validation RMSE, preferring the larger λ on ties.
pub fn select_lambda<R: AsRef<[f64]>>(
    train_x: &[R],
    train_y: &[f64],
    val_x: &[R],
    val_y: &[f64],
    grid: &[f64],
) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::Parameter("λ grid is empty".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in grid {
        let model = RidgeModel::fit(train_x, train_y, lambda)?;
        let score = rmse(&model.predict(val_x)?, val_y);
        scores.push((lambda, score));
        best = match best {
            Some((bl, bs)) if score > bs || (score == bs && lambda < bl) => Some((bl, bs)),
            _ => Some((lambda, score)),
        };
    }
    Ok(LambdaSelection {
        lambda: best.map(|b| b.0).unwrap_or(grid[0]),
        scores,
    })
}
