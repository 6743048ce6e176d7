//! Test of the null that some units have doses arbitrarily close to zero.
//!
//! The statistic only uses the two smallest doses: `T = D(1) / (D(2) - D(1))`.
//! Under the null it converges to a ratio of independent standard
//! exponentials, whose survival function is `1 / (1 + t)`.

use serde::Serialize;

use crate::error::{HadError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct QugReport {
    /// Smallest dose.
    pub d1: f64,
    /// Smallest dose strictly above `d1`.
    pub d2: f64,
    #[serde(rename = "T")]
    pub t_stat: f64,
    pub p_value: f64,
    pub alpha: f64,
    /// `1 / alpha - 1`.
    pub critical_value: f64,
    pub reject: bool,
    /// Extra units tied with `d1`.
    pub ties_collapsed: usize,
    /// Set when ties at the minimum exceed 10% of the sample.
    pub many_ties: bool,
    pub g: usize,
}

/// Survival function of the limiting null distribution.
pub fn qug_p_value(t: f64) -> f64 {
    1.0 / (1.0 + t)
}

pub fn qug_critical_value(alpha: f64) -> f64 {
    1.0 / alpha - 1.0
}

/// Runs the test on strictly positive doses.
pub fn test_qug(d: &[f64], alpha: f64) -> Result<QugReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HadError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(HadError::InvalidArgument("non-finite dose".into()));
    }
    if d.iter().any(|&v| v < 0.0) {
        return Err(HadError::InvalidArgument("negative dose".into()));
    }
    let zeros = d.iter().filter(|&&v| v == 0.0).count();
    if zeros > 0 {
        return Err(HadError::UntreatedUnits { count: zeros });
    }
    let d1 = d.iter().copied().fold(f64::INFINITY, f64::min);
    let d2 = d.iter().copied().filter(|&v| v > d1).fold(f64::INFINITY, f64::min);
    if !d2.is_finite() {
        return Err(HadError::InsufficientData("the test needs at least two distinct doses".into()));
    }
    let ties_collapsed = d.iter().filter(|&&v| v == d1).count() - 1;
    let t_stat = d1 / (d2 - d1);
    let critical_value = qug_critical_value(alpha);
    Ok(QugReport {
        d1,
        d2,
        t_stat,
        p_value: qug_p_value(t_stat),
        alpha,
        critical_value,
        reject: t_stat > critical_value,
        ties_collapsed,
        many_ties: ties_collapsed as f64 > 0.1 * d.len() as f64,
        g: d.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn critical_value_at_five_percent() {
        assert_relative_eq!(qug_critical_value(0.05), 19.0, epsilon = 1e-12);
    }

    #[test]
    fn ties_at_minimum_are_collapsed() {
        let r = test_qug(&[0.5, 0.5, 1.0, 2.0], 0.05).unwrap();
        assert_eq!(r.ties_collapsed, 1);
        assert_relative_eq!(r.t_stat, 1.0);
        assert_relative_eq!(r.p_value, 0.5);
        assert!(!r.reject);
    }

    #[test]
    fn zeros_direct_to_untreated_group() {
        assert!(matches!(test_qug(&[0.0, 0.0, 1.0], 0.05), Err(HadError::UntreatedUnits { count: 2 })));
    }

    #[test]
    fn single_distinct_value_is_error() {
        assert!(matches!(test_qug(&[1.0, 1.0, 1.0], 0.05), Err(HadError::InsufficientData(_))));
    }
}
