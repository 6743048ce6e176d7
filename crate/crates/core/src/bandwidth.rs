//! Data-driven bandwidths for the boundary local-linear estimator.
//!
//! The selector is a three-stage regularized direct plug-in: a rule-of-thumb
//! pilot sets the variance windows, a local cubic fit estimates the third
//! derivative used to pick the quadratic fit's bandwidth `b`, and the local
//! quadratic at `b` provides the curvature that enters the MSE-optimal `h`.
//! Every stage estimates its variance from nearest-neighbour residuals and
//! adds a regularization term for the sampling variance of the bias estimate,
//! which keeps `h` from blowing up when curvature is poorly estimated.

use serde::Serialize;

use crate::error::{HadError, Result};
use crate::local_poly::{nn_residuals, window_fit, KernelSpec, NN_NEIGHBORS};
use crate::stats;

/// Samples below this size use the rule-of-thumb pilot for both bandwidths.
pub const MIN_PLUGIN_SAMPLE: usize = 30;

/// Order statistic of `|d|` used as the smallest admissible bandwidth.
pub const BW_CHECK: usize = 21;

/// Relative tolerance under which the curvature estimate counts as zero.
pub const FLAT_CURVATURE_TOL: f64 = 1e-8;

/// Number of histogram bins on `[0, q20]` for the boundary density.
pub const DENSITY_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthFlag {
    /// Curvature indistinguishable from zero; `h` set to the dose range.
    FlatCurvatureCap,
    /// No observations in the first density bin.
    BoundaryDensityZero,
    /// Fewer than [`MIN_PLUGIN_SAMPLE`] observations; pilot rule of thumb used.
    RuleOfThumb,
    /// Bandwidth supplied by the caller.
    UserSupplied,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandwidthSelection {
    /// Main bandwidth for the local-linear fit.
    pub h_star: f64,
    /// Bandwidth of the local-quadratic bias fit; never below `h_star`.
    pub b_star: f64,
    /// Curvature estimate `m''(0)`.
    pub m2_hat: f64,
    /// Histogram estimate of the dose density at the boundary.
    pub f0_hat: f64,
    /// Nearest-neighbour residual variance within the pilot window.
    pub s2_hat: f64,
    /// Rule-of-thumb pilot bandwidth.
    pub pilot: f64,
    pub g: usize,
    pub flags: Vec<BandwidthFlag>,
}

impl BandwidthSelection {
    /// A fixed bandwidth. `b` defaults to `h`.
    pub fn user(h: f64, b: Option<f64>, g: usize) -> Result<Self> {
        let b = b.unwrap_or(h);
        if !(h > 0.0 && h.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(HadError::InvalidArgument(format!("bandwidths must be positive and finite, got h={h}, b={b}")));
        }
        Ok(Self {
            h_star: h,
            b_star: b,
            m2_hat: f64::NAN,
            f0_hat: f64::NAN,
            s2_hat: f64::NAN,
            pilot: f64::NAN,
            g,
            flags: vec![BandwidthFlag::UserSupplied],
        })
    }

    pub fn has_flag(&self, flag: BandwidthFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Options for [`select_bandwidth_with`].
#[derive(Debug, Clone, Copy)]
pub struct SelectorOptions {
    /// Weight on the bias-estimation variance term; 0 gives the unregularized plug-in.
    pub regularization: f64,
    /// Force `b = h`.
    pub rho_one: bool,
}

impl Default for SelectorOptions {
    fn default() -> Self {
        Self { regularization: 1.0, rho_one: false }
    }
}

struct StageTerms {
    v: f64,
    b: f64,
    r: f64,
    /// Leading coefficient of the bias fit, in dose units.
    lead: f64,
}

/// One plug-in stage for the derivative of order `nu` of a local polynomial of
/// order `o`: variance constant from the fit at `h_v`, bias constant from a
/// fit of order `o + 1` at `h_b`.
#[allow(clippy::too_many_arguments)]
fn stage(
    x: &[f64],
    y: &[f64],
    kernel: &KernelSpec,
    o: usize,
    nu: usize,
    h_v: f64,
    h_b: f64,
    regularization: f64,
) -> Result<StageTerms> {
    let wv: Vec<f64> = x.iter().map(|&v| kernel.eval(v / h_v) / h_v).collect();
    let fit_v = window_fit(x, y, &wv, o, h_v)?;
    let ex: Vec<f64> = fit_v.idx.iter().map(|&i| x[i]).collect();
    let ey: Vec<f64> = fit_v.idx.iter().map(|&i| y[i]).collect();
    let res = nn_residuals(&ex, &ey, NN_NEIGHBORS);
    // Variance of the u^nu coefficient, back in dose units.
    let v_nu = fit_v.sandwich(&res)[(nu, nu)] / h_v.powi(2 * nu as i32);

    // Coefficient of u^nu when u^(o+1) is projected on the order-o basis.
    let mut proj = nalgebra::DVector::<f64>::zeros(o + 1);
    for (i, row) in fit_v.basis.row_iter().enumerate() {
        let u = ex[i] / h_v;
        proj += row.transpose() * (fit_v.w[i] * u.powi(o as i32 + 1));
    }
    let b_const = (&fit_v.inv_gram * proj)[nu];

    let wb: Vec<f64> = x.iter().map(|&v| kernel.eval(v / h_b)).collect();
    let fit_b = window_fit(x, y, &wb, o + 1, h_b)?;
    let scale_lead = h_b.powi(o as i32 + 1);
    let lead = fit_b.coef[o + 1] / scale_lead;
    let mut r = 0.0;
    if regularization > 0.0 {
        let bx: Vec<f64> = fit_b.idx.iter().map(|&i| x[i]).collect();
        let by: Vec<f64> = fit_b.idx.iter().map(|&i| y[i]).collect();
        let res_b = nn_residuals(&bx, &by, NN_NEIGHBORS);
        let v_lead = fit_b.sandwich(&res_b)[(o + 1, o + 1)] / (scale_lead * scale_lead);
        r = regularization * 2.0 * (o + 1 - nu) as f64 * 3.0 * b_const * b_const * v_lead;
    }
    let b = (2.0 * (o + 1 - nu) as f64).sqrt() * b_const * lead;
    let v = (2 * nu + 1) as f64 * h_v.powi(2 * nu as i32 + 1) * v_nu;
    Ok(StageTerms { v, b, r, lead })
}

/// Rule-of-thumb pilot `c_k · min(sd, IQR/1.349) · n^(-1/5)`, clamped to
/// `[bw_min, max x]`.
fn pilot_bandwidth(sorted: &[f64], kernel: &KernelSpec, bw_min: f64) -> f64 {
    let n = sorted.len();
    let iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { stats::std_dev(sorted).min(iqr / 1.349) } else { stats::std_dev(sorted) };
    let c = kernel.pilot_constant() * spread * (n as f64).powf(-0.2);
    c.min(sorted[n - 1]).max(bw_min)
}

fn boundary_density(sorted: &[f64]) -> f64 {
    let q = stats::quantile_sorted(sorted, 0.2);
    if q <= 0.0 {
        return 0.0;
    }
    let width = q / DENSITY_BINS as f64;
    let count = sorted.iter().take_while(|&&v| v <= width).count();
    count as f64 / (sorted.len() as f64 * width)
}

/// Selects `(h, b)` for the boundary fit at zero with default options.
pub fn select_bandwidth(d: &[f64], y: &[f64], kernel: &KernelSpec) -> Result<BandwidthSelection> {
    select_bandwidth_with(d, y, kernel, SelectorOptions::default())
}

/// Selects `(h, b)` for the boundary fit at zero. Doses must be nonnegative.
pub fn select_bandwidth_with(
    d: &[f64],
    y: &[f64],
    kernel: &KernelSpec,
    options: SelectorOptions,
) -> Result<BandwidthSelection> {
    if d.len() != y.len() {
        return Err(HadError::InvalidArgument(format!("{} doses for {} outcomes", d.len(), y.len())));
    }
    let g = d.len();
    if g < 3 {
        return Err(HadError::InsufficientData(format!("at least 3 units are required, found {g}")));
    }
    if d.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(HadError::InvalidArgument("non-finite value in sample".into()));
    }
    if d.iter().any(|&v| v < 0.0) {
        return Err(HadError::InvalidArgument("doses must lie at or above the boundary".into()));
    }
    let order = stats::argsort(d);
    let x: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let range = x[g - 1] - x[0];
    if range <= 0.0 {
        return Err(HadError::DegenerateDose);
    }
    let bw_min = x[BW_CHECK.min(g) - 1];
    let pilot = pilot_bandwidth(&x, kernel, bw_min);
    let f0_hat = boundary_density(&x);
    let pilot_idx: Vec<usize> = (0..g).filter(|&i| x[i] <= pilot).collect();
    let s2_hat = {
        let px: Vec<f64> = pilot_idx.iter().map(|&i| x[i]).collect();
        let py: Vec<f64> = pilot_idx.iter().map(|&i| ys[i]).collect();
        let r = nn_residuals(&px, &py, NN_NEIGHBORS);
        if r.is_empty() { 0.0 } else { r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64 }
    };
    let mut flags = Vec::new();
    if f0_hat == 0.0 {
        flags.push(BandwidthFlag::BoundaryDensityZero);
    }

    if g < MIN_PLUGIN_SAMPLE {
        flags.push(BandwidthFlag::RuleOfThumb);
        let h = pilot.min(range);
        return Ok(BandwidthSelection {
            h_star: h,
            b_star: pilot.max(h),
            m2_hat: f64::NAN,
            f0_hat,
            s2_hat,
            pilot,
            g,
            flags,
        });
    }

    let reg = options.regularization;
    // The last point would get zero weight at exactly the range for kernels vanishing at 1.
    let full = range.max(x[g - 1]) * (1.0 + 1e-7);
    let s3 = stage(&x, &ys, kernel, 3, 3, pilot, full, 0.0)?;
    let d_bw = (s3.v / (s3.b * s3.b)).powf(1.0 / 9.0);
    let d_bw = if d_bw.is_finite() { d_bw.max(bw_min) } else { full };

    let s2 = stage(&x, &ys, kernel, 2, 2, pilot, d_bw, reg)?;
    let b_bw = (s2.v / (s2.b * s2.b + s2.r)).powf(1.0 / 7.0);
    let b_bw = if b_bw.is_finite() { b_bw.max(bw_min) } else { full };

    let s1 = stage(&x, &ys, kernel, 1, 0, pilot, b_bw, reg)?;
    let m2_hat = 2.0 * s1.lead;
    let h_raw = (s1.v / (s1.b * s1.b + s1.r)).powf(0.2);

    let sd_y = stats::std_dev(&ys);
    let flat = m2_hat.abs() < FLAT_CURVATURE_TOL * sd_y / (range * range) || !h_raw.is_finite();
    let h_star = if flat {
        flags.push(BandwidthFlag::FlatCurvatureCap);
        range
    } else {
        h_raw.max(bw_min).min(range)
    };
    let b_star = if options.rho_one { h_star } else { b_bw.max(h_star) };
    Ok(BandwidthSelection { h_star, b_star, m2_hat, f0_hat, s2_hat, pilot, g, flags })
}
