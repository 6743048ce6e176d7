//! One-sided kernels and weighted local-polynomial regression at the left
//! edge of the dose support.
//!
//! All fits are carried out in the scaled coordinate `u = (d - boundary) / h`
//! so that conditioning does not depend on the units of the dose; returned
//! coefficients are mapped back to dose units.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::error::{HadError, Result};
use crate::linalg;

/// Number of nearest neighbours used for residual variance estimates.
pub const NN_NEIGHBORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    #[serde(rename = "epa")]
    Epanechnikov,
    #[serde(rename = "tri")]
    Triangular,
    #[serde(rename = "uni")]
    Uniform,
}

impl Kernel {
    pub fn short_name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epa",
            Kernel::Triangular => "tri",
            Kernel::Uniform => "uni",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Kernel {
    type Err = HadError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epa" | "epanechnikov" => Ok(Kernel::Epanechnikov),
            "tri" | "triangular" => Ok(Kernel::Triangular),
            "uni" | "uniform" => Ok(Kernel::Uniform),
            _ => Err(HadError::UnknownKernel(s.to_string())),
        }
    }
}

/// A one-sided kernel on `[0, 1]` with its moments and derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    pub kind: Kernel,
    /// `κ_j = ∫ t^j k(t) dt` for `j = 0..=3`.
    pub moments: [f64; 4],
    /// `C = (κ2² - κ1 κ3) / (κ0 κ2 - κ1²)`.
    pub c_const: f64,
    /// `∫ k*(t)² dt` for the equivalent kernel `k*(t) = (κ2 - κ1 t) k(t) / (κ0 κ2 - κ1²)`.
    pub kstar_sq_int: f64,
}

impl KernelSpec {
    pub fn new(kind: Kernel) -> Self {
        let (moments, c_const, kstar_sq_int) = match kind {
            Kernel::Uniform => ([1.0, 0.5, 1.0 / 3.0, 0.25], -1.0 / 6.0, 4.0),
            Kernel::Triangular => ([0.5, 1.0 / 6.0, 1.0 / 12.0, 1.0 / 20.0], -0.1, 24.0 / 5.0),
            Kernel::Epanechnikov => ([0.5, 3.0 / 16.0, 0.1, 1.0 / 16.0], -11.0 / 95.0, 56832.0 / 12635.0),
        };
        Self { kind, moments, c_const, kstar_sq_int }
    }

    /// `k(t)`, zero outside `[0, 1]`.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        match self.kind {
            Kernel::Uniform => 1.0,
            Kernel::Triangular => 1.0 - t,
            Kernel::Epanechnikov => 0.75 * (1.0 - t * t),
        }
    }

    /// Equivalent boundary kernel of the local-linear intercept.
    pub fn kstar(&self, t: f64) -> f64 {
        let [k0, k1, k2, _] = self.moments;
        (k2 - k1 * t) / (k0 * k2 - k1 * k1) * self.eval(t)
    }

    /// Rule-of-thumb constant for the pilot bandwidth `c · min(sd, IQR/1.349) · n^(-1/5)`.
    pub fn pilot_constant(&self) -> f64 {
        match self.kind {
            Kernel::Epanechnikov => 2.34,
            Kernel::Triangular => 2.576,
            Kernel::Uniform => 1.843,
        }
    }
}

/// Looks up a kernel by name (`epa`, `tri`, `uni` or the long forms).
pub fn make_kernel(name: &str) -> Result<KernelSpec> {
    Ok(KernelSpec::new(name.parse()?))
}

/// Result of [`local_fit`].
#[derive(Debug, Clone)]
pub struct LocalFit {
    /// Intercept: the estimated regression function at the boundary.
    pub point: f64,
    /// Polynomial coefficients in powers of `d - boundary`, intercept first.
    pub coefs: Vec<f64>,
    pub h: f64,
    pub p: usize,
    pub n_eff: usize,
    /// `y - fitted` for every observation (including zero-weight ones).
    pub residuals: Vec<f64>,
    /// `k((d - boundary) / h) / h` for every observation.
    pub weights: Vec<f64>,
}

/// Weighted polynomial fit restricted to the positive-weight window, in the
/// scaled coordinate `x / scale`.
#[derive(Debug, Clone)]
pub(crate) struct WindowFit {
    pub idx: Vec<usize>,
    pub basis: DMatrix<f64>,
    pub w: Vec<f64>,
    pub coef: DVector<f64>,
    pub inv_gram: DMatrix<f64>,
}

impl WindowFit {
    /// Sandwich `G^{-1} (Σ w_i² r_i² R_i R_i') G^{-1}` for per-window residuals `r`.
    pub fn sandwich(&self, res: &[f64]) -> DMatrix<f64> {
        let k = self.basis.ncols();
        let mut meat = DMatrix::<f64>::zeros(k, k);
        for (i, r) in res.iter().enumerate() {
            let s = self.w[i] * self.w[i] * r * r;
            let row = self.basis.row(i);
            meat += row.transpose() * row * s;
        }
        &self.inv_gram * meat * &self.inv_gram
    }
}

pub(crate) fn window_fit(x: &[f64], y: &[f64], w: &[f64], order: usize, scale: f64) -> Result<WindowFit> {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
    let k = order + 1;
    if idx.len() < k + 1 {
        return Err(HadError::InsufficientObservations { found: idx.len(), required: k + 1 });
    }
    let basis = DMatrix::from_fn(idx.len(), k, |i, j| (x[idx[i]] / scale).powi(j as i32));
    let yv = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]));
    let wv: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
    let fit = linalg::least_squares(&basis, &yv, Some(&wv))?;
    Ok(WindowFit { idx, basis, w: wv, coef: fit.coef, inv_gram: fit.xtwx_inv })
}

/// Kernel weights `k(x / h) / h`.
pub fn kernel_weights(x: &[f64], kernel: &KernelSpec, h: f64) -> Vec<f64> {
    x.iter().map(|&v| kernel.eval(v / h) / h).collect()
}

/// Weighted least squares of `y` on `1, (d - b), …, (d - b)^p` with weights
/// `k((d - b) / h) / h`.
pub fn local_fit(d: &[f64], y: &[f64], kernel: &KernelSpec, h: f64, p: usize, boundary: f64) -> Result<LocalFit> {
    if d.len() != y.len() {
        return Err(HadError::InvalidArgument(format!("{} doses for {} outcomes", d.len(), y.len())));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(HadError::InvalidArgument(format!("bandwidth must be positive and finite, got {h}")));
    }
    if !(1..=3).contains(&p) {
        return Err(HadError::InvalidArgument(format!("polynomial order must be 1, 2 or 3, got {p}")));
    }
    let x: Vec<f64> = d.iter().map(|v| v - boundary).collect();
    let weights = kernel_weights(&x, kernel, h);
    let n_eff = weights.iter().filter(|&&w| w > 0.0).count();
    if n_eff < p + 2 {
        return Err(HadError::InsufficientObservations { found: n_eff, required: p + 2 });
    }
    let wf = window_fit(&x, y, &weights, p, h)?;
    let coefs: Vec<f64> = wf.coef.iter().enumerate().map(|(j, c)| c / h.powi(j as i32)).collect();
    let residuals = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| yi - coefs.iter().rev().fold(0.0, |acc, c| acc * xi + c))
        .collect();
    Ok(LocalFit { point: coefs[0], coefs, h, p, n_eff, residuals, weights })
}

/// Nearest-neighbour residuals `sqrt(J/(J+1)) (y_i - mean of the J nearest
/// neighbours of x_i)`, with neighbours picked greedily to the left or right.
/// Equidistant candidates on both sides are both taken.
pub fn nn_residuals(x: &[f64], y: &[f64], neighbors: usize) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let sorted = x.windows(2).all(|w| w[0] <= w[1]);
    let order: Vec<usize> = if sorted { (0..n).collect() } else { crate::stats::argsort(x) };
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let target = neighbors.min(n - 1);
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (mut l, mut r) = (0usize, 0usize);
        while l + r < target {
            if i < l + 1 {
                r += 1;
            } else if i + r + 1 >= n {
                l += 1;
            } else {
                let dl = xs[i] - xs[i - l - 1];
                let dr = xs[i + r + 1] - xs[i];
                if dl > dr {
                    r += 1;
                } else if dl < dr {
                    l += 1;
                } else {
                    l += 1;
                    r += 1;
                }
            }
        }
        let lo = i - l;
        let hi = (i + r).min(n - 1);
        let j = (hi - lo) as f64;
        let sum: f64 = ys[lo..=hi].iter().sum::<f64>() - ys[i];
        out[order[i]] = (j / (j + 1.0)).sqrt() * (ys[i] - sum / j);
    }
    out
}

/// Local-linear boundary fit with robust bias correction from a local
/// quadratic at a (possibly different) bias bandwidth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RobustFit {
    /// Local-linear intercept at bandwidth `h`.
    pub mu: f64,
    /// Bias-corrected intercept.
    pub mu_bc: f64,
    /// Standard error of `mu_bc`, accounting for the bias estimate.
    pub se_rb: f64,
    /// Conventional standard error of `mu`.
    pub se_conventional: f64,
    /// Observations with positive weight at `h`.
    pub n_eff: usize,
}

/// Robust bias-corrected local-linear estimate of `E[y | x = 0]` for `x >= 0`.
pub fn robust_boundary_fit(x: &[f64], y: &[f64], kernel: &KernelSpec, h: f64, b: f64) -> Result<RobustFit> {
    if x.len() != y.len() {
        return Err(HadError::InvalidArgument(format!("{} doses for {} outcomes", x.len(), y.len())));
    }
    if !(h > 0.0 && b > 0.0 && h.is_finite() && b.is_finite()) {
        return Err(HadError::InvalidArgument(format!("bandwidths must be positive and finite, got h={h}, b={b}")));
    }
    let wh_all = kernel_weights(x, kernel, h);
    let wb_all = kernel_weights(x, kernel, b);
    let n_h = wh_all.iter().filter(|&&w| w > 0.0).count();
    let n_b = wb_all.iter().filter(|&&w| w > 0.0).count();
    if n_h < 3 {
        return Err(HadError::InsufficientObservations { found: n_h, required: 3 });
    }
    if n_b < 4 {
        return Err(HadError::InsufficientObservations { found: n_b, required: 4 });
    }
    let primary = if b >= h { &wb_all } else { &wh_all };
    let ind: Vec<usize> = (0..x.len()).filter(|&i| primary[i] > 0.0).collect();
    let ex: Vec<f64> = ind.iter().map(|&i| x[i]).collect();
    let ey: Vec<f64> = ind.iter().map(|&i| y[i]).collect();
    let wh: Vec<f64> = ind.iter().map(|&i| wh_all[i]).collect();
    let wb: Vec<f64> = ind.iter().map(|&i| wb_all[i]).collect();

    // Both fits use u = x / h; the h^2 factor of the bias term is then absorbed.
    let fit_p = window_fit(&ex, &ey, &wh, 1, h)?;
    let fit_q = window_fit(&ex, &ey, &wb, 2, h)?;
    let inv_gp = Matrix2::new(
        fit_p.inv_gram[(0, 0)],
        fit_p.inv_gram[(0, 1)],
        fit_p.inv_gram[(1, 0)],
        fit_p.inv_gram[(1, 1)],
    );
    let inv_gq = &fit_q.inv_gram;

    let mut l = Vector2::zeros();
    for i in 0..ex.len() {
        let u = ex[i] / h;
        l += Vector2::new(1.0, u) * (wh[i] * u * u);
    }
    let qq: Vec<Vector2<f64>> = (0..ex.len())
        .map(|i| {
            let u = ex[i] / h;
            let v2 = (inv_gq[(2, 0)] + inv_gq[(2, 1)] * u + inv_gq[(2, 2)] * u * u) * wb[i];
            Vector2::new(1.0, u) * wh[i] - l * v2
        })
        .collect();
    let qy = qq.iter().zip(&ey).fold(Vector2::zeros(), |acc, (q, yi)| acc + q * *yi);
    let beta_bc = inv_gp * qy;

    let res = nn_residuals(&ex, &ey, NN_NEIGHBORS);
    let mut meat_rb = Matrix2::zeros();
    let mut meat_cl = Matrix2::zeros();
    for i in 0..ex.len() {
        let r2 = res[i] * res[i];
        meat_rb += qq[i] * qq[i].transpose() * r2;
        let rp = Vector2::new(1.0, ex[i] / h) * wh[i];
        meat_cl += rp * rp.transpose() * r2;
    }
    let v_rb = inv_gp * meat_rb * inv_gp;
    let v_cl = inv_gp * meat_cl * inv_gp;
    Ok(RobustFit {
        mu: fit_p.coef[0],
        mu_bc: beta_bc[0],
        se_rb: v_rb[(0, 0)].max(0.0).sqrt(),
        se_conventional: v_cl[(0, 0)].max(0.0).sqrt(),
        n_eff: n_h,
    })
}
