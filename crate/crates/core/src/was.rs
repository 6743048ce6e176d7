//! Estimators of the weighted average slope (WAS).
//!
//! With a quasi-untreated group, `WAS = (E[ΔY] - E[ΔY | D = 0]) / E[D]` and
//! the boundary conditional mean is estimated by a local-linear fit at zero.
//! Without one, the same machinery is applied at the lowest dose `d̲`
//! ([`estimate_shifted`]) or, when `d̲` is a mass point, by a ratio of cell
//! means ([`estimate_mass_point`]).

use rayon::prelude::*;
use serde::Serialize;

use crate::bandwidth::{select_bandwidth_with, BandwidthSelection, SelectorOptions};
use crate::error::{HadError, Result};
use crate::local_poly::{robust_boundary_fit, KernelSpec};
use crate::panel::{difference, DifferencedSample, Panel};
use crate::qug::{test_qug, QugReport};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    /// Boundary at zero: a quasi-untreated group exists.
    Qug,
    /// Boundary at the lowest observed dose.
    Shifted,
    /// Ratio estimator for a mass point at the lowest dose.
    MassPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct WasEstimate {
    pub beta: f64,
    /// Estimate of `E[ΔY | D = boundary]`.
    pub mu0_hat: f64,
    /// Correction added to `beta` to center the interval.
    pub bias_hat: f64,
    /// Estimated variance of the bias-corrected numerator.
    pub var_hat: f64,
    /// Standard error of the bias-corrected estimate.
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub h_used: Option<f64>,
    pub b_used: Option<f64>,
    pub n_eff: usize,
    pub boundary: f64,
    pub mode: EstimationMode,
    pub g: usize,
    /// Mean of the (shifted) dose used as denominator.
    pub mean_dose: f64,
    pub mean_dy: f64,
    /// `mean(d) / min(d)` on the original doses; infinite with zero doses.
    pub dose_ratio: f64,
    pub bandwidth: Option<BandwidthSelection>,
}

impl WasEstimate {
    /// Center of the confidence interval.
    pub fn beta_bc(&self) -> f64 {
        self.beta + self.bias_hat
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(HadError::InvalidArgument(format!("alpha must lie in (0, 0.5], got {alpha}")))
    }
}

fn dose_ratio(d: &[f64]) -> f64 {
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 { stats::mean(d) / min } else { f64::INFINITY }
}

#[allow(clippy::too_many_arguments)]
fn nonparametric(
    dy: &[f64],
    x: &[f64],
    kernel: &KernelSpec,
    bw: Option<&BandwidthSelection>,
    alpha: f64,
    boundary: f64,
    mode: EstimationMode,
    original_d: &[f64],
) -> Result<WasEstimate> {
    check_alpha(alpha)?;
    if x.iter().any(|&v| v < 0.0) {
        return Err(HadError::InvalidArgument("doses below the boundary".into()));
    }
    let mean_dose = stats::mean(x);
    if mean_dose <= 0.0 {
        return Err(HadError::InvalidArgument("mean dose must be positive".into()));
    }
    let selection = match bw {
        Some(s) => s.clone(),
        None => select_bandwidth_with(x, dy, kernel, SelectorOptions::default())?,
    };
    let fit = robust_boundary_fit(x, dy, kernel, selection.h_star, selection.b_star)?;
    let mean_dy = stats::mean(dy);
    let z = stats::normal_quantile(1.0 - alpha / 2.0);
    let beta = (mean_dy - fit.mu) / mean_dose;
    let bias_hat = (fit.mu - fit.mu_bc) / mean_dose;
    let se = fit.se_rb / mean_dose;
    let center = beta + bias_hat;
    Ok(WasEstimate {
        beta,
        mu0_hat: fit.mu,
        bias_hat,
        var_hat: fit.se_rb * fit.se_rb,
        se,
        ci_low: center - z * se,
        ci_high: center + z * se,
        alpha,
        h_used: Some(selection.h_star),
        b_used: Some(selection.b_star),
        n_eff: fit.n_eff,
        boundary,
        mode,
        g: x.len(),
        mean_dose,
        mean_dy,
        dose_ratio: dose_ratio(original_d),
        bandwidth: Some(selection),
    })
}

/// Nonparametric estimate with the boundary at zero. Selects the bandwidths
/// when `bw` is `None`.
pub fn estimate_was(
    sample: &DifferencedSample,
    kernel: &KernelSpec,
    bw: Option<&BandwidthSelection>,
    alpha: f64,
) -> Result<WasEstimate> {
    nonparametric(&sample.dy, &sample.d, kernel, bw, alpha, 0.0, EstimationMode::Qug, &sample.d)
}

/// Nonparametric estimate with the boundary at the lowest dose, on `d - min(d)`.
pub fn estimate_shifted(
    sample: &DifferencedSample,
    kernel: &KernelSpec,
    bw: Option<&BandwidthSelection>,
    alpha: f64,
) -> Result<WasEstimate> {
    let boundary = sample.d.iter().copied().fold(f64::INFINITY, f64::min);
    if boundary <= 0.0 {
        return Err(HadError::InvalidArgument(
            "the lowest dose is zero: use the estimator with the boundary at zero".into(),
        ));
    }
    let x: Vec<f64> = sample.d.iter().map(|v| v - boundary).collect();
    nonparametric(&sample.dy, &x, kernel, bw, alpha, boundary, EstimationMode::Shifted, &sample.d)
}

/// Ratio of cell-mean differences between units above the lowest dose and
/// units at it. Doses within `mass_tol` (relative) of the minimum count as
/// the mass point.
pub fn estimate_mass_point(sample: &DifferencedSample, alpha: f64, mass_tol: f64) -> Result<WasEstimate> {
    check_alpha(alpha)?;
    if mass_tol.is_nan() || mass_tol < 0.0 {
        return Err(HadError::InvalidArgument(format!("mass tolerance must be nonnegative, got {mass_tol}")));
    }
    let d_min = sample.d.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = d_min + mass_tol * d_min.abs();
    let at_mass: Vec<usize> = (0..sample.g_count()).filter(|&i| sample.d[i] <= cutoff).collect();
    let above: Vec<usize> = (0..sample.g_count()).filter(|&i| sample.d[i] > cutoff).collect();
    if at_mass.len() < 2 {
        return Err(HadError::NoMassPoint);
    }
    if above.len() < 2 {
        return Err(HadError::InsufficientData(format!(
            "{} units above the mass point, at least 2 required",
            above.len()
        )));
    }
    let pick = |idx: &[usize], v: &[f64]| -> Vec<f64> { idx.iter().map(|&i| v[i]).collect() };
    let (ym, ya) = (pick(&at_mass, &sample.dy), pick(&above, &sample.dy));
    let (dm, da) = (pick(&at_mass, &sample.d), pick(&above, &sample.d));
    let delta = stats::mean(&da) - stats::mean(&dm);
    let beta = (stats::mean(&ya) - stats::mean(&ym)) / delta;
    // Delta method: the numerator a - c - beta (e - d0) has cell-wise
    // independent influence terms y - beta d.
    let cell_var = |y: &[f64], d: &[f64]| -> f64 {
        let u: Vec<f64> = y.iter().zip(d).map(|(yi, di)| yi - beta * di).collect();
        stats::variance(&u) / u.len() as f64
    };
    let var_hat = cell_var(&ya, &da) + cell_var(&ym, &dm);
    let se = var_hat.sqrt() / delta;
    let z = stats::normal_quantile(1.0 - alpha / 2.0);
    Ok(WasEstimate {
        beta,
        mu0_hat: stats::mean(&ym),
        bias_hat: 0.0,
        var_hat,
        se,
        ci_low: beta - z * se,
        ci_high: beta + z * se,
        alpha,
        h_used: None,
        b_used: None,
        n_eff: at_mass.len(),
        boundary: d_min,
        mode: EstimationMode::MassPoint,
        g: sample.g_count(),
        mean_dose: delta,
        mean_dy: stats::mean(&sample.dy),
        dose_ratio: dose_ratio(&sample.d),
        bandwidth: None,
    })
}

/// Settings shared by [`estimate`] and [`event_study`].
#[derive(Debug, Clone, Copy)]
pub struct WasOptions {
    pub kernel: KernelSpec,
    pub alpha: f64,
    /// Fixed main bandwidth; selection runs when `None`.
    pub bandwidth: Option<f64>,
    /// Fixed bias bandwidth, only used with `bandwidth`.
    pub bias_bandwidth: Option<f64>,
    pub rho_one: bool,
    pub mass_tol: f64,
}

impl Default for WasOptions {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::new(Default::default()),
            alpha: 0.05,
            bandwidth: None,
            bias_bandwidth: None,
            rho_one: false,
            mass_tol: 0.0,
        }
    }
}

/// Chooses the estimator from the data: the boundary-at-zero estimator when
/// zero doses exist or the QUG test does not reject, otherwise the
/// mass-point estimator when the minimum is tied and the shifted estimator
/// if it is not. Returns the QUG report when the test was run.
pub fn resolve_mode(d: &[f64], alpha: f64, mass_tol: f64) -> Result<(EstimationMode, Option<QugReport>)> {
    if d.contains(&0.0) {
        return Ok((EstimationMode::Qug, None));
    }
    let report = test_qug(d, alpha)?;
    if !report.reject {
        return Ok((EstimationMode::Qug, Some(report)));
    }
    let cutoff = report.d1 * (1.0 + mass_tol);
    let at_mass = d.iter().filter(|&&v| v <= cutoff).count();
    let mode = if at_mass >= 2 { EstimationMode::MassPoint } else { EstimationMode::Shifted };
    Ok((mode, Some(report)))
}

/// Dispatches to the estimator for `mode`.
pub fn estimate(sample: &DifferencedSample, mode: EstimationMode, options: &WasOptions) -> Result<WasEstimate> {
    let x_for = |mode| -> Vec<f64> {
        if mode == EstimationMode::Shifted {
            let m = sample.d.iter().copied().fold(f64::INFINITY, f64::min);
            sample.d.iter().map(|v| v - m).collect()
        } else {
            sample.d.clone()
        }
    };
    let bw = match (mode, options.bandwidth) {
        (EstimationMode::MassPoint, _) => None,
        (_, Some(h)) => Some(BandwidthSelection::user(h, options.bias_bandwidth, sample.g_count())?),
        (_, None) if options.rho_one => {
            let sel_opts = SelectorOptions { rho_one: true, ..SelectorOptions::default() };
            Some(select_bandwidth_with(&x_for(mode), &sample.dy, &options.kernel, sel_opts)?)
        }
        _ => None,
    };
    match mode {
        EstimationMode::Qug => estimate_was(sample, &options.kernel, bw.as_ref(), options.alpha),
        EstimationMode::Shifted => estimate_shifted(sample, &options.kernel, bw.as_ref(), options.alpha),
        EstimationMode::MassPoint => estimate_mass_point(sample, options.alpha, options.mass_tol),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EventStudyPoint {
    pub period: i64,
    pub base_period: i64,
    pub is_pretrend: bool,
    pub estimate: WasEstimate,
}

/// Estimates for every requested period against the last untreated period.
/// `horizons` defaults to all post-treatment periods and `pre_periods` to all
/// periods before the reference period. Periods are estimated in parallel;
/// output follows period order.
pub fn event_study(
    panel: &Panel,
    mode: EstimationMode,
    options: &WasOptions,
    horizons: Option<&[i64]>,
    pre_periods: Option<&[i64]>,
) -> Result<Vec<EventStudyPoint>> {
    let base = panel.reference_period();
    let f = panel.treatment_period();
    let mut periods: Vec<(i64, bool)> = Vec::new();
    match horizons {
        Some(h) => {
            for &t in h {
                if t < f {
                    return Err(HadError::InvalidArgument(format!("horizon {t} precedes the treatment period {f}")));
                }
                periods.push((t, false));
            }
        }
        None => periods.extend(panel.post_periods().map(|t| (t, false))),
    }
    match pre_periods {
        Some(p) => {
            for &t in p {
                if t >= base {
                    return Err(HadError::InvalidArgument(format!(
                        "pre-trend period {t} is not before the reference period {base}"
                    )));
                }
                periods.push((t, true));
            }
        }
        None => periods.extend(panel.pre_periods().filter(|&t| t < base).map(|t| (t, true))),
    }
    periods.sort_unstable();
    periods.dedup();
    periods
        .par_iter()
        .map(|&(t, is_pretrend)| {
            let sample = difference(panel, base, t)?;
            let estimate = estimate(&sample, mode, options)?;
            Ok(EventStudyPoint { period: t, base_period: base, is_pretrend, estimate })
        })
        .collect()
}
