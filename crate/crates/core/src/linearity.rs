//! Specification tests for the linearity of `E[ΔY | D]` (TWFE validity) and
//! for mean independence of pre-trends from the dose.
//!
//! * Stute's Cramér–von Mises statistic on the cusum of residuals sorted by
//!   dose, with a wild bootstrap using Mammen's two-point multipliers.
//! * A joint version summing per-period statistics with shared multipliers.
//! * A covariate version with multivariate cusum indicators.
//! * Yatchew's difference-based test in its heteroskedasticity-robust form.
//! * A Wald test on polynomial coefficients for doses with few support points.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HadError, Result};
use crate::linalg;
use crate::panel::{transformed_outcome, OutcomeTransform, Panel};
use crate::stats;

/// Bootstrap draws evaluated together; bounds working memory at `64 · G`.
pub const BOOTSTRAP_BLOCK: usize = 64;

/// Default number of bootstrap draws.
pub const DEFAULT_DRAWS: usize = 500;

/// Fewest draws accepted by the bootstrap tests.
pub const MIN_DRAWS: usize = 99;

/// Mammen's two-point law: `(value_low, value_high, P(value_high))`.
pub fn mammen_law() -> (f64, f64, f64) {
    let s5 = 5f64.sqrt();
    ((1.0 - s5) / 2.0, (1.0 + s5) / 2.0, (s5 - 1.0) / (2.0 * s5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// Residuals from a regression on a constant and the dose.
    #[default]
    Linearity,
    /// Residuals from a regression on a constant only.
    MeanIndependence,
}

#[derive(Debug, Clone, Serialize)]
pub struct StuteReport {
    #[serde(rename = "S")]
    pub statistic: f64,
    pub p_value: f64,
    #[serde(rename = "B")]
    pub draws: usize,
    pub seed: u64,
    pub mode: TestMode,
    pub periods: Vec<i64>,
    #[serde(rename = "per_period_S")]
    pub per_period_s: Vec<f64>,
    pub g: usize,
    /// All residuals are zero: the null holds exactly and `p_value` is 1.
    pub degenerate: bool,
}

/// Projection off the column space of a design: `M v = v - X (X'X)^{-1} X' v`.
struct Residualizer {
    x: DMatrix<f64>,
    xtx_inv: DMatrix<f64>,
}

impl Residualizer {
    fn new(x: DMatrix<f64>) -> Result<Self> {
        let probe = DVector::zeros(x.nrows());
        let fit = linalg::least_squares(&x, &probe, None)?;
        Ok(Self { x, xtx_inv: fit.xtwx_inv })
    }

    fn for_mode(d: &[f64], mode: TestMode) -> Result<Self> {
        let x = match mode {
            TestMode::Linearity => {
                if stats::variance(d) <= 0.0 {
                    return Err(HadError::DegenerateDose);
                }
                linalg::with_intercept(&[d])
            }
            TestMode::MeanIndependence => DMatrix::from_element(d.len(), 1, 1.0),
        };
        Self::new(x)
    }

    fn residualize(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        let coef = &self.xtx_inv * (self.x.transpose() * &v);
        (v - &self.x * coef).iter().copied().collect()
    }

    /// Residualizes each column of a block.
    fn residualize_block(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let coef = &self.xtx_inv * (self.x.tr_mul(v));
        v - &self.x * coef
    }
}

/// `(1/G²) Σ_g (Σ_{h ≤ g} e_(h))²` with `order` sorting by dose.
fn cusum_statistic(resid: &[f64], order: &[usize]) -> f64 {
    let g = resid.len() as f64;
    let mut acc = 0.0;
    let mut s = 0.0;
    for &i in order {
        acc += resid[i];
        s += acc * acc;
    }
    s / (g * g)
}

/// Column-wise cusum statistic of a `G × B` residual block: `(1/G²) 1'(L E)∘²`.
fn cusum_block(e: &DMatrix<f64>, order: &[usize]) -> Vec<f64> {
    let g = e.nrows() as f64;
    e.column_iter()
        .map(|col| {
            let mut acc = 0.0;
            let mut s = 0.0;
            for &i in order {
                acc += col[i];
                s += acc * acc;
            }
            s / (g * g)
        })
        .collect()
}

fn is_degenerate(resid: &[f64], y: &[f64]) -> bool {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    resid.iter().all(|e| e.abs() <= 1e-10 * scale)
}

/// Fills `out` with the multipliers for one draw from its own stream.
fn draw_multipliers(seed: u64, draw: usize, out: &mut [f64]) {
    let (lo, hi, p_hi) = mammen_law();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    for v in out.iter_mut() {
        *v = if rng.random::<f64>() < p_hi { hi } else { lo };
    }
}

/// Block of multipliers, `G × len`, for draws `start..start + len`.
fn multiplier_block(seed: u64, g: usize, start: usize, len: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(g, len);
    for (j, mut col) in m.column_iter_mut().enumerate() {
        draw_multipliers(seed, start + j, col.as_mut_slice());
    }
    m
}

/// Bootstrap statistics for `draws` draws, evaluated in parallel blocks.
/// `stat` maps a block of multipliers to one statistic per column.
fn bootstrap<F>(g: usize, draws: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&DMatrix<f64>) -> Vec<f64> + Sync,
{
    let starts: Vec<usize> = (0..draws).step_by(BOOTSTRAP_BLOCK).collect();
    starts
        .par_iter()
        .map(|&start| {
            let len = BOOTSTRAP_BLOCK.min(draws - start);
            stat(&multiplier_block(seed, g, start, len))
        })
        .collect::<Vec<_>>()
        .concat()
}

fn exceedance(stat: f64, boot: &[f64]) -> f64 {
    boot.iter().filter(|&&s| s > stat).count() as f64 / boot.len() as f64
}

fn check_inputs(d: &[f64], ys: &[&[f64]], min_g: usize) -> Result<()> {
    if ys.iter().any(|y| y.len() != d.len()) {
        return Err(HadError::InvalidArgument("doses and outcomes differ in length".into()));
    }
    if d.len() < min_g {
        return Err(HadError::InsufficientData(format!("at least {min_g} units are required, found {}", d.len())));
    }
    if d.iter().chain(ys.iter().flat_map(|y| y.iter())).any(|v| !v.is_finite()) {
        return Err(HadError::InvalidArgument("non-finite value in sample".into()));
    }
    Ok(())
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < MIN_DRAWS {
        return Err(HadError::InvalidArgument(format!("at least {MIN_DRAWS} bootstrap draws are required, got {draws}")));
    }
    Ok(())
}

/// Cusum statistic of residuals `resid` ordered by the dose `d`.
pub fn cusum(d: &[f64], resid: &[f64]) -> f64 {
    cusum_statistic(resid, &stats::argsort(d))
}

/// Cusum statistic and the residuals it is built from.
pub fn stute_statistic(d: &[f64], y: &[f64], mode: TestMode) -> Result<(f64, Vec<f64>)> {
    check_inputs(d, &[y], 10)?;
    let m = Residualizer::for_mode(d, mode)?;
    let resid = m.residualize(y);
    Ok((cusum_statistic(&resid, &stats::argsort(d)), resid))
}

/// Stute test with `draws` wild-bootstrap replications.
pub fn stute_test(d: &[f64], y: &[f64], mode: TestMode, draws: usize, seed: u64) -> Result<StuteReport> {
    stute_joint(d, &[y.to_vec()], &[], mode, draws, seed)
}

/// Joint Stute test over several outcome vectors sharing the same doses.
/// The joint statistic is the sum of per-outcome statistics; each draw uses
/// one multiplier per unit for all outcomes.
pub fn stute_joint(
    d: &[f64],
    ys: &[Vec<f64>],
    periods: &[i64],
    mode: TestMode,
    draws: usize,
    seed: u64,
) -> Result<StuteReport> {
    if ys.is_empty() {
        return Err(HadError::InvalidArgument("at least one outcome is required".into()));
    }
    let refs: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
    check_inputs(d, &refs, 10)?;
    check_draws(draws)?;
    let m = Residualizer::for_mode(d, mode)?;
    let order = stats::argsort(d);
    let resids: Vec<Vec<f64>> = ys.iter().map(|y| m.residualize(y)).collect();
    let per_period_s: Vec<f64> = resids.iter().map(|e| cusum_statistic(e, &order)).collect();
    let statistic: f64 = per_period_s.iter().sum();
    let degenerate = resids.iter().zip(ys).all(|(e, y)| is_degenerate(e, y));
    let g = d.len();
    let p_value = if degenerate {
        1.0
    } else {
        let boot = bootstrap(g, draws, seed, |eta| {
            let mut total = vec![0.0; eta.ncols()];
            for e in &resids {
                let mut v = eta.clone();
                for (i, ei) in e.iter().enumerate() {
                    v.row_mut(i).scale_mut(*ei);
                }
                let r = m.residualize_block(&v);
                for (t, s) in total.iter_mut().zip(cusum_block(&r, &order)) {
                    *t += s;
                }
            }
            total
        });
        exceedance(statistic, &boot)
    };
    Ok(StuteReport {
        statistic,
        p_value,
        draws,
        seed,
        mode,
        periods: periods.to_vec(),
        per_period_s,
        g,
        degenerate,
    })
}

/// Joint Stute test on transformed panel outcomes for the given periods,
/// regressed on the unit's post-treatment dose.
pub fn stute_joint_panel(
    panel: &Panel,
    periods: &[i64],
    transform: OutcomeTransform,
    mode: TestMode,
    draws: usize,
    seed: u64,
) -> Result<StuteReport> {
    let ys: Vec<Vec<f64>> = periods.iter().map(|&t| transformed_outcome(panel, transform, t)).collect::<Result<_>>()?;
    stute_joint(&panel.unit_doses(), &ys, periods, mode, draws, seed)
}

/// Indicator matrix `A[g, h] = 1{d_h <= d_g and x_h <= x_g componentwise}`.
fn joint_indicators(d: &[f64], x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = d.len();
    DMatrix::from_fn(n, n, |g, h| {
        let below = d[h] <= d[g] && x[h].iter().zip(&x[g]).all(|(a, b)| a <= b);
        if below { 1.0 } else { 0.0 }
    })
}

/// Covariate-adjusted Stute test. `x` holds one row per unit including an
/// intercept column; residuals come from the regression on `(x, d·x)`.
pub fn stute_covariates(d: &[f64], y: &[f64], x: &[Vec<f64>], draws: usize, seed: u64) -> Result<StuteReport> {
    check_inputs(d, &[y], 10)?;
    check_draws(draws)?;
    if x.len() != d.len() {
        return Err(HadError::InvalidArgument(format!("{} covariate rows for {} units", x.len(), d.len())));
    }
    let k = x.first().map_or(0, |r| r.len());
    if k == 0 || x.iter().any(|r| r.len() != k) {
        return Err(HadError::InvalidArgument("covariate rows must be non-empty and of equal length".into()));
    }
    let g = d.len();
    let design = DMatrix::from_fn(g, 2 * k, |i, j| if j < k { x[i][j] } else { d[i] * x[i][j - k] });
    let m = Residualizer::new(design)?;
    let resid = m.residualize(y);
    let a = joint_indicators(d, x);
    let gg = (g * g) as f64;
    let stat_of = |e: &DMatrix<f64>| -> Vec<f64> {
        let c = &a * e;
        c.column_iter().map(|col| col.norm_squared() / gg).collect()
    };
    let statistic = stat_of(&DMatrix::from_column_slice(g, 1, &resid))[0];
    let degenerate = is_degenerate(&resid, y);
    let p_value = if degenerate {
        1.0
    } else {
        let boot = bootstrap(g, draws, seed, |eta| {
            let mut v = eta.clone();
            for (i, ei) in resid.iter().enumerate() {
                v.row_mut(i).scale_mut(*ei);
            }
            stat_of(&m.residualize_block(&v))
        });
        exceedance(statistic, &boot)
    };
    Ok(StuteReport {
        statistic,
        p_value,
        draws,
        seed,
        mode: TestMode::Linearity,
        periods: vec![],
        per_period_s: vec![statistic],
        g,
        degenerate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct YatchewReport {
    pub sig2_lin: f64,
    pub sig2_diff: f64,
    #[serde(rename = "sigW4_hat")]
    pub sig_w4: f64,
    /// Robust statistic; `None` when every residual is zero.
    #[serde(rename = "T_hr")]
    pub t_hr: Option<f64>,
    pub p_value: f64,
    /// Statistic `√G (sig2_lin / sig2_diff - 1)` valid under homoskedasticity only.
    #[serde(rename = "T_nonrobust")]
    pub t_nonrobust: Option<f64>,
    pub p_value_nonrobust: f64,
    pub alpha: f64,
    pub reject: bool,
    pub g: usize,
    pub degenerate: bool,
}

/// Yatchew's variance-ratio test without the minimum-sample check; the
/// statistic components are well defined from three units on.
pub fn yatchew_components(d: &[f64], y: &[f64], alpha: f64) -> Result<YatchewReport> {
    check_inputs(d, &[y], 3)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HadError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let m = Residualizer::for_mode(d, TestMode::Linearity)?;
    let resid = m.residualize(y);
    let g = d.len();
    let gf = g as f64;
    let order = stats::argsort(d);
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let es: Vec<f64> = order.iter().map(|&i| resid[i]).collect();
    let sig2_diff = ys.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (2.0 * gf);
    let sig2_lin = es.iter().map(|e| e * e).sum::<f64>() / gf;
    let sig_w4 = es.windows(2).map(|w| w[0] * w[0] * w[1] * w[1]).sum::<f64>() / (gf - 1.0);
    let degenerate = is_degenerate(&resid, y) || sig_w4 <= 0.0;
    let (t_hr, p_value) = if degenerate {
        (None, 1.0)
    } else {
        let t = gf.sqrt() * (sig2_lin - sig2_diff) / sig_w4.sqrt();
        (Some(t), 1.0 - stats::normal_cdf(t))
    };
    let (t_nonrobust, p_value_nonrobust) = if degenerate || sig2_diff <= 0.0 {
        (None, 1.0)
    } else {
        let t = gf.sqrt() * (sig2_lin / sig2_diff - 1.0);
        (Some(t), 1.0 - stats::normal_cdf(t))
    };
    Ok(YatchewReport {
        sig2_lin,
        sig2_diff,
        sig_w4,
        t_hr,
        p_value,
        t_nonrobust,
        p_value_nonrobust,
        alpha,
        reject: p_value < alpha,
        g,
        degenerate,
    })
}

/// Heteroskedasticity-robust Yatchew test (at least 20 units).
pub fn yatchew_test(d: &[f64], y: &[f64], alpha: f64) -> Result<YatchewReport> {
    check_inputs(d, &[y], 20)?;
    yatchew_components(d, y, alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct PolyReport {
    /// Wald statistic.
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Distinct dose values.
    pub k_levels: usize,
    pub mode: TestMode,
    pub g: usize,
}

/// Largest number of dose values accepted by [`poly_test_discrete`].
pub const MAX_POLY_LEVELS: usize = 20;

/// HC2 Wald test that the coefficients on `d², …, d^(K-1)` (linearity) or
/// `d, …, d^(K-1)` (mean independence) are zero in the saturated polynomial
/// regression on a dose with `K` values.
pub fn poly_test_discrete(d: &[f64], y: &[f64], mode: TestMode) -> Result<PolyReport> {
    check_inputs(d, &[y], 3)?;
    let levels = {
        let mut s = stats::sorted_copy(d);
        s.dedup();
        s
    };
    let k = levels.len();
    let min_levels = match mode {
        TestMode::Linearity => 3,
        TestMode::MeanIndependence => 2,
    };
    if k < 2 {
        return Err(HadError::DegenerateDose);
    }
    if k < min_levels {
        return Err(HadError::NoRoomForTestability);
    }
    if k > MAX_POLY_LEVELS {
        return Err(HadError::InvalidArgument(format!(
            "the dose takes {k} values, more than {MAX_POLY_LEVELS}: use the Stute or Yatchew test"
        )));
    }
    for &v in &levels {
        if d.iter().filter(|&&x| x == v).count() < 2 {
            return Err(HadError::InsufficientData(format!("dose value {v} has a single observation")));
        }
    }
    let mean = stats::mean(d);
    let sd = stats::std_dev(d);
    let g = d.len();
    let x = DMatrix::from_fn(g, k, |i, j| ((d[i] - mean) / sd).powi(j as i32));
    let fit = linalg::least_squares(&x, &DVector::from_column_slice(y), None)?;
    let v = linalg::hc2_covariance(&x, &fit);
    let first = match mode {
        TestMode::Linearity => 2,
        TestMode::MeanIndependence => 1,
    };
    let q = k - first;
    let c = fit.coef.rows(first, q).into_owned();
    let vr = v.view((first, first), (q, q)).into_owned();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let statistic = if c.amax() <= 1e-10 * scale {
        0.0
    } else {
        let inv = vr.try_inverse().ok_or(HadError::Singular { condition: f64::INFINITY })?;
        (c.transpose() * inv * &c)[(0, 0)].max(0.0)
    };
    Ok(PolyReport { statistic, dof: q, p_value: stats::chi2_sf(statistic, q as f64), k_levels: k, mode, g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mammen_moments() {
        let (lo, hi, p) = mammen_law();
        let m = |k: i32| p * hi.powi(k) + (1.0 - p) * lo.powi(k);
        assert_relative_eq!(m(1), 0.0, epsilon = 1e-15);
        assert_relative_eq!(m(2), 1.0, epsilon = 1e-15);
        assert_relative_eq!(m(3), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn three_point_cusum() {
        let m = Residualizer::for_mode(&[1.0, 2.0, 3.0], TestMode::Linearity).unwrap();
        let e = m.residualize(&[0.0, 1.0, 0.0]);
        assert_relative_eq!(cusum_statistic(&e, &[0, 1, 2]), 2.0 / 81.0, epsilon = 1e-15);
    }

    #[test]
    fn two_levels_no_room() {
        let d = [1.0, 1.0, 2.0, 2.0];
        let y = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(poly_test_discrete(&d, &y, TestMode::Linearity), Err(HadError::NoRoomForTestability)));
        assert!(poly_test_discrete(&d, &y, TestMode::MeanIndependence).is_ok());
    }

    #[test]
    fn draws_are_reproducible() {
        let mut a = vec![0.0; 10];
        let mut b = vec![0.0; 10];
        draw_multipliers(3, 17, &mut a);
        draw_multipliers(3, 17, &mut b);
        assert_eq!(a, b);
        draw_multipliers(3, 18, &mut b);
        assert_ne!(a, b);
    }
}
