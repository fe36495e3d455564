//! Base regressors, the OLS meta-learner and the windowed evaluation metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelId;
use crate::window::WindowBuffer;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressError {
    #[error("degenerate training window: {rows} row(s) with lambda = {lambda}")]
    DegenerateWindow { rows: usize, lambda: f64 },
    #[error("empty training window")]
    EmptyWindow,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Ridge regressor with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub train_window_size: usize,
}

impl RidgeModel {
    /// Fits `min Σ(y − w·x − b)² + λ‖w‖²` over the window.
    pub fn fit(window: &WindowBuffer, lambda: f64) -> Result<Self, RegressError> {
        let rows: Vec<&[f64]> = window.iter().map(|r| r.features.as_slice()).collect();
        let targets = window.targets();
        Self::fit_rows(&rows, &targets, lambda)
    }

    pub fn fit_rows(rows: &[&[f64]], targets: &[f64], lambda: f64) -> Result<Self, RegressError> {
        assert!(lambda >= 0.0, "lambda must be non-negative");
        let n = rows.len();
        if n == 0 {
            return Err(RegressError::EmptyWindow);
        }
        if targets.len() != n {
            return Err(RegressError::LengthMismatch { left: n, right: targets.len() });
        }
        if n < 2 && lambda == 0.0 {
            return Err(RegressError::DegenerateWindow { rows: n, lambda });
        }
        let m = rows[0].len();
        let inv_n = 1.0 / n as f64;
        let mut x_mean = vec![0.0; m];
        for row in rows {
            for (acc, v) in x_mean.iter_mut().zip(row.iter()) {
                *acc += v * inv_n;
            }
        }
        let y_mean = targets.iter().sum::<f64>() * inv_n;

        // Normal equations on centred data: (XcᵀXc + λI) w = Xcᵀyc.
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        let mut centred = vec![0.0; m];
        for (row, &y) in rows.iter().zip(targets) {
            for (c, (v, mu)) in centred.iter_mut().zip(row.iter().zip(&x_mean)) {
                *c = v - mu;
            }
            let yc = y - y_mean;
            for i in 0..m {
                rhs[i] += centred[i] * yc;
                for j in i..m {
                    gram[(i, j)] += centred[i] * centred[j];
                }
            }
        }
        for i in 0..m {
            gram[(i, i)] += lambda;
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }

        let weights = match gram.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => min_norm_solve(gram, &rhs),
        };
        let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, mu)| w * mu).sum::<f64>();
        Ok(Self {
            weights: weights.iter().copied().collect(),
            intercept,
            lambda,
            train_window_size: n,
        })
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.weights.len());
        self.intercept + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict_window(&self, window: &WindowBuffer) -> Vec<f64> {
        window.iter().map(|r| self.predict(&r.features)).collect()
    }

    /// R² of this model over the window.
    pub fn r2_on(&self, window: &WindowBuffer) -> f64 {
        let preds = self.predict_window(window);
        r2_score(&preds, &window.targets())
    }
}

/// Minimum-norm least squares via the SVD pseudo-inverse.
///
/// Singular values below `σ_max · max(rows, cols) · ε` are treated as zero.
fn min_norm_solve(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (rows, cols) = a.shape();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * rows.max(cols) as f64 * f64::EPSILON;
    match svd.solve(b, tol) {
        Ok(x) => x,
        Err(_) => DVector::zeros(cols),
    }
}

/// OLS stacking meta-learner `F(x) = w₀ + Σ wⱼ fⱼ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLearner {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub member_ids: Vec<ModelId>,
}

impl MetaLearner {
    /// Solves the unconstrained squared-loss problem over base-model predictions.
    ///
    /// `meta_rows` is `|W| × k`; column `j` holds the predictions of `member_ids[j]`.
    /// Rank-deficient systems get the minimum-norm solution.
    pub fn fit(
        member_ids: Vec<ModelId>,
        meta_rows: &DMatrix<f64>,
        targets: &[f64],
    ) -> Result<Self, RegressError> {
        let (n, k) = meta_rows.shape();
        if n == 0 {
            return Err(RegressError::EmptyWindow);
        }
        if targets.len() != n {
            return Err(RegressError::LengthMismatch { left: n, right: targets.len() });
        }
        if member_ids.len() != k {
            return Err(RegressError::LengthMismatch { left: member_ids.len(), right: k });
        }
        let y_mean = targets.iter().sum::<f64>() / n as f64;
        if k == 0 {
            return Ok(Self { weights: Vec::new(), intercept: y_mean, member_ids });
        }
        let col_means: Vec<f64> = (0..k).map(|j| meta_rows.column(j).mean()).collect();
        let mut centred = meta_rows.clone();
        for j in 0..k {
            let mu = col_means[j];
            centred.column_mut(j).add_scalar_mut(-mu);
        }
        let yc = DVector::from_iterator(n, targets.iter().map(|y| y - y_mean));
        let w = min_norm_solve(centred, &yc);
        let intercept = y_mean - w.iter().zip(&col_means).map(|(a, b)| a * b).sum::<f64>();
        Ok(Self {
            weights: w.iter().copied().collect(),
            intercept,
            member_ids,
        })
    }

    /// Combines member predictions given in `member_ids` order.
    pub fn predict(&self, member_predictions: &[f64]) -> f64 {
        debug_assert_eq!(member_predictions.len(), self.weights.len());
        self.intercept
            + self
                .weights
                .iter()
                .zip(member_predictions)
                .map(|(w, p)| w * p)
                .sum::<f64>()
    }
}

/// One row of the prequential metric series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub window_index: usize,
    pub r2: f64,
    pub pmcc2: f64,
    pub rmse: f64,
    pub active_models: usize,
    pub metric_calcs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub r2: f64,
    pub pmcc2: f64,
    pub rmse: f64,
}

/// R², squared Pearson correlation and RMSE of `preds` against `targets`.
///
/// Zero-variance targets give R² = 1 when every residual is zero and −∞
/// otherwise; PMCC² is 0 whenever either side has zero variance.
pub fn evaluate(preds: &[f64], targets: &[f64]) -> Result<Scores, RegressError> {
    if preds.len() != targets.len() {
        return Err(RegressError::LengthMismatch { left: preds.len(), right: targets.len() });
    }
    if preds.is_empty() {
        return Err(RegressError::EmptyWindow);
    }
    let n = preds.len() as f64;
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(Scores {
        r2: r2_score(preds, targets),
        pmcc2: pmcc2(preds, targets),
        rmse: (ss_res / n).sqrt(),
    })
}

/// Coefficient of determination. See [`evaluate`] for the zero-variance rule.
pub fn r2_score(preds: &[f64], targets: &[f64]) -> f64 {
    debug_assert_eq!(preds.len(), targets.len());
    if targets.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

pub fn pmcc2(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 || !saa.is_finite() || !sbb.is_finite() {
        return 0.0;
    }
    (sab * sab / (saa * sbb)).clamp(0.0, 1.0)
}

pub fn mse(preds: &[f64], targets: &[f64]) -> f64 {
    preds.iter().zip(targets).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / preds.len() as f64
}
