//! Two-way fixed effects on first differences: the OLS slope of `ΔY` on the
//! dose with HC2 standard errors and Bell–McCaffrey degrees of freedom, the
//! implied weights on unit-level slopes, a linear-trend variant and the
//! covariate-interacted average-slope estimator.
//!
//! For a contrast `c'β` with `a = X (X'X)^{-1} c`, HC2 gives
//! `V = Σ_i a_i² e_i² / (1 - h_ii)`. Writing `A = diag(a_i² / (1 - h_ii))`
//! and `M = I - H`, the degrees of freedom are
//! `tr(AM)² / tr(AMAM)`, with
//! `tr(AMAM) = Σ α_i² - 2 Σ α_i² h_ii + tr(P S P S)`, `P = (X'X)^{-1}`,
//! `S = X'AX`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{HadError, Result};
use crate::linalg::{self, LsFit};
use crate::panel::{transformed_outcome, DifferencedSample, OutcomeTransform, Panel};
use crate::stats;

#[derive(Debug, Clone, Serialize)]
pub struct TwfeEstimate {
    pub beta_fe: f64,
    pub beta0: f64,
    /// HC2 standard error of `beta_fe`.
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Bell–McCaffrey degrees of freedom.
    pub dof: f64,
    pub alpha: f64,
    #[serde(rename = "G")]
    pub g: usize,
}

/// HC2 variance and Bell–McCaffrey degrees of freedom for `c'β`.
pub fn hc2_contrast(x: &DMatrix<f64>, fit: &LsFit, c: &DVector<f64>) -> (f64, f64) {
    let p = &fit.xtwx_inv;
    let h = linalg::leverages(x, p);
    let a = x * (p * c);
    let alpha: Vec<f64> = (0..x.nrows()).map(|i| a[i] * a[i] / (1.0 - h[i]).max(f64::EPSILON)).collect();
    let var: f64 = (0..x.nrows()).map(|i| alpha[i] * fit.resid[i] * fit.resid[i]).sum();
    let tr_am: f64 = (0..x.nrows()).map(|i| alpha[i] * (1.0 - h[i])).sum();
    let k = x.ncols();
    let mut s = DMatrix::<f64>::zeros(k, k);
    for (row, a) in x.row_iter().zip(&alpha) {
        s += row.transpose() * row * *a;
    }
    let ps = p * &s;
    let tr_psps = (&ps * &ps).trace();
    let tr_amam: f64 = (0..x.nrows()).map(|i| alpha[i] * alpha[i] * (1.0 - 2.0 * h[i])).sum::<f64>() + tr_psps;
    let dof = if tr_amam > 0.0 { tr_am * tr_am / tr_amam } else { f64::INFINITY };
    (var, dof)
}

fn fit_slope(d: &[f64], dy: &[f64], alpha: f64) -> Result<TwfeEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HadError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if stats::variance(d) <= 0.0 {
        return Err(HadError::DegenerateDose);
    }
    let x = linalg::with_intercept(&[d]);
    let fit = linalg::least_squares(&x, &DVector::from_column_slice(dy), None)?;
    let (var, dof) = hc2_contrast(&x, &fit, &DVector::from_vec(vec![0.0, 1.0]));
    let se = var.max(0.0).sqrt();
    let q = stats::student_t_quantile(1.0 - alpha / 2.0, dof);
    let beta_fe = fit.coef[1];
    Ok(TwfeEstimate {
        beta_fe,
        beta0: fit.coef[0],
        se,
        ci_low: beta_fe - q * se,
        ci_high: beta_fe + q * se,
        dof,
        alpha,
        g: d.len(),
    })
}

/// OLS of `dy` on a constant and `d`.
pub fn twfe_fit(sample: &DifferencedSample, alpha: f64) -> Result<TwfeEstimate> {
    fit_slope(&sample.d, &sample.dy, alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightReport {
    /// `(d_g - mean d) d_g`, normalized to sum to one.
    pub weights: Vec<f64>,
    pub n_positive: usize,
    pub n_negative: usize,
    pub negative_sum: f64,
}

/// Weights attached by the TWFE slope to each unit's slope `ΔY_g / d_g`.
pub fn twfe_weights(d: &[f64]) -> Result<WeightReport> {
    if d.len() < 2 || stats::variance(d) <= 0.0 {
        return Err(HadError::DegenerateDose);
    }
    let m = stats::mean(d);
    let raw: Vec<f64> = d.iter().map(|v| (v - m) * v).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
    Ok(WeightReport {
        n_positive: weights.iter().filter(|&&w| w > 0.0).count(),
        n_negative: weights.iter().filter(|&&w| w < 0.0).count(),
        negative_sum: weights.iter().filter(|&&w| w < 0.0).sum(),
        weights,
    })
}

/// TWFE on deviations from unit-specific linear trends through `base` and
/// `anchor` (defaults: the last untreated period and the one before it).
pub fn twfe_linear_trends(
    panel: &Panel,
    base: Option<i64>,
    anchor: Option<i64>,
    target: i64,
    alpha: f64,
) -> Result<TwfeEstimate> {
    if panel.pre_periods().count() < 2 {
        return Err(HadError::InsufficientData("linear trends need at least 2 pre-treatment periods".into()));
    }
    let y = transformed_outcome(panel, OutcomeTransform::LinearTrend { base, anchor }, target)?;
    fit_slope(&panel.unit_doses(), &y, alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateTwfe {
    /// Coefficients on `x`.
    pub gamma_hat: Vec<f64>,
    /// Coefficients on `d · x`.
    pub delta_hat: Vec<f64>,
    /// `mean(x)' delta_hat`.
    pub as_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    #[serde(rename = "G")]
    pub g: usize,
}

/// OLS of `dy` on `(x, d·x)`; the covariate rows must include an intercept.
/// The standard error adds the sampling variance of `mean(x)` to the HC2
/// variance of the coefficients.
pub fn twfe_covariates(sample: &DifferencedSample, alpha: f64) -> Result<CovariateTwfe> {
    let x = sample
        .x
        .as_ref()
        .ok_or_else(|| HadError::InvalidArgument("sample has no covariates".into()))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HadError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let g = sample.g_count();
    let k = x.first().map_or(0, |r| r.len());
    if k == 0 || x.iter().any(|r| r.len() != k) {
        return Err(HadError::InvalidArgument("covariate rows must be non-empty and of equal length".into()));
    }
    let d = &sample.d;
    let design = DMatrix::from_fn(g, 2 * k, |i, j| if j < k { x[i][j] } else { d[i] * x[i][j - k] });
    let fit = linalg::least_squares(&design, &DVector::from_column_slice(&sample.dy), None)?;
    let v = linalg::hc2_covariance(&design, &fit);
    let xbar: Vec<f64> = (0..k).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / g as f64).collect();
    let delta_hat: Vec<f64> = (0..k).map(|j| fit.coef[k + j]).collect();
    let as_hat: f64 = xbar.iter().zip(&delta_hat).map(|(a, b)| a * b).sum();

    let xb = DVector::from_column_slice(&xbar);
    let v_delta = v.view((k, k), (k, k)).into_owned();
    let coef_part = (xb.transpose() * v_delta * &xb)[(0, 0)];
    // Sample variance of x'δ across units, over G.
    let proj: Vec<f64> = x.iter().map(|r| r.iter().zip(&delta_hat).map(|(a, b)| a * b).sum()).collect();
    let mean_part = stats::variance(&proj) / g as f64;
    let se = (coef_part + mean_part).max(0.0).sqrt();
    let z = stats::normal_quantile(1.0 - alpha / 2.0);
    Ok(CovariateTwfe {
        gamma_hat: (0..k).map(|j| fit.coef[j]).collect(),
        delta_hat,
        as_hat,
        se,
        ci_low: as_hat - z * se,
        ci_high: as_hat + z * se,
        alpha,
        g,
    })
}
