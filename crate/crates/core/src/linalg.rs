//! Small dense least-squares helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{HadError, Result};

/// Designs whose column-equilibrated condition number exceeds this are
/// rejected as singular.
pub const MAX_CONDITION: f64 = 1e10;

/// Ordinary or weighted least-squares fit.
#[derive(Debug, Clone)]
pub struct LsFit {
    pub coef: DVector<f64>,
    pub fitted: DVector<f64>,
    pub resid: DVector<f64>,
    /// `(X' W X)^{-1}`.
    pub xtwx_inv: DMatrix<f64>,
}

/// Condition number of `x` after scaling every column to unit norm.
pub fn condition_number(x: &DMatrix<f64>) -> f64 {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least squares of `y` on `x` with optional nonnegative weights, solved
/// through a QR decomposition of `sqrt(W) X`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, weights: Option<&[f64]>) -> Result<LsFit> {
    let (n, k) = x.shape();
    if n < k || k == 0 {
        return Err(HadError::InsufficientObservations { found: n, required: k.max(1) });
    }
    let sw: Vec<f64> = match weights {
        Some(w) => w.iter().map(|v| v.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let mut xw = x.clone();
    let mut yw = y.clone();
    for i in 0..n {
        for j in 0..k {
            xw[(i, j)] *= sw[i];
        }
        yw[i] *= sw[i];
    }
    let condition = condition_number(&xw);
    if condition > MAX_CONDITION {
        return Err(HadError::Singular { condition });
    }
    let qr = xw.qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yw;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(HadError::Singular { condition })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(HadError::Singular { condition })?;
    let xtwx_inv = &r_inv * r_inv.transpose();
    let fitted = x * &coef;
    let resid = y - &fitted;
    Ok(LsFit { coef, fitted, resid, xtwx_inv })
}

/// Design matrix with an intercept followed by the given columns.
pub fn with_intercept(columns: &[&[f64]]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] })
}

/// Diagonal of the hat matrix `X (X'X)^{-1} X'`.
pub fn leverages(x: &DMatrix<f64>, xtx_inv: &DMatrix<f64>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let row = x.row(i);
            (row * xtx_inv * row.transpose())[(0, 0)]
        })
        .collect()
}

/// HC2 sandwich covariance `(X'X)^{-1} X' diag(e^2 / (1 - h)) X (X'X)^{-1}`.
pub fn hc2_covariance(x: &DMatrix<f64>, fit: &LsFit) -> DMatrix<f64> {
    let k = x.ncols();
    let h = leverages(x, &fit.xtwx_inv);
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for (i, (row, hi)) in x.row_iter().zip(&h).enumerate() {
        let s = fit.resid[i] * fit.resid[i] / (1.0 - hi).max(f64::EPSILON);
        meat += row.transpose() * row * s;
    }
    &fit.xtwx_inv * meat * &fit.xtwx_inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ols_recovers_line() {
        let d = [1.0, 2.0, 3.0, 4.0];
        let x = with_intercept(&[&d]);
        let y = DVector::from_iterator(4, d.iter().map(|v| 2.0 + 3.0 * v));
        let fit = least_squares(&x, &y, None).unwrap();
        assert_relative_eq!(fit.coef[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coef[1], 3.0, epsilon = 1e-12);
        assert!(fit.resid.amax() < 1e-12);
    }

    #[test]
    fn collinear_design_is_singular() {
        let d = [1.0, 2.0, 3.0];
        let d2 = [2.0, 4.0, 6.0];
        let x = with_intercept(&[&d, &d2]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(least_squares(&x, &y, None), Err(HadError::Singular { .. })));
    }

    #[test]
    fn hc2_matches_hand_computation() {
        // Leverages (0.6, 0.3, 0.2, 0.3, 0.6) for x = 1..5.
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = DVector::from_vec(vec![2.1, 4.3, 5.8, 8.2, 9.9]);
        let x = with_intercept(&[&d]);
        let fit = least_squares(&x, &y, None).unwrap();
        let h = leverages(&x, &fit.xtwx_inv);
        for (a, b) in h.iter().zip([0.6, 0.3, 0.2, 0.3, 0.6]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        let v = hc2_covariance(&x, &fit);
        assert_relative_eq!(v[(1, 1)].sqrt(), 0.04185, epsilon = 5e-5);
        assert_relative_eq!(v[(0, 0)].sqrt(), 0.15489, epsilon = 5e-5);
    }
}
