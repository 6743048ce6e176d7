//! Monte Carlo harness: coverage studies for the WAS estimator and
//! size/power studies for the tests.
//!
//! Replication `r` of a study seeded with `s` draws from its own ChaCha8
//! stream (`seed = s`, `stream = r`), so results do not depend on how
//! replications are scheduled across threads, and a study can be split into
//! ranges and pooled.

use std::ops::Range;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HadError, Result};
use crate::linearity::{poly_test_discrete, stute_test, yatchew_test, TestMode};
use crate::panel::DifferencedSample;
use crate::qug::test_qug;
use crate::stats;
use crate::was::{estimate, EstimationMode, WasOptions};

/// Distribution of the dose in a custom design.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum DoseLaw {
    Uniform { low: f64, high: f64 },
    /// Equally likely support points.
    Discrete { values: Vec<f64> },
}

impl DoseLaw {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            DoseLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            DoseLaw::Discrete { values } => values[rng.random_range(0..values.len())],
        }
    }

    /// `E[D^k]`.
    fn moment(&self, k: i32) -> f64 {
        match self {
            DoseLaw::Uniform { low, high } => {
                if high == low {
                    low.powi(k)
                } else {
                    (high.powi(k + 1) - low.powi(k + 1)) / ((k + 1) as f64 * (high - low))
                }
            }
            DoseLaw::Discrete { values } => values.iter().map(|v| v.powi(k)).sum::<f64>() / values.len() as f64,
        }
    }
}

/// `ΔY = Σ_k coefs[k] d^k + noise_sd · s(d) · ε` with `s(d) = |d|` when
/// heteroskedastic and 1 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomDgp {
    pub dose: DoseLaw,
    pub coefs: Vec<f64>,
    pub noise_sd: f64,
    pub heteroskedastic: bool,
}

impl CustomDgp {
    fn mean_fn(&self, d: f64) -> f64 {
        self.coefs.iter().rev().fold(0.0, |acc, c| acc * d + c)
    }

    /// `E[m(D) - m(0)] / E[D]`.
    pub fn was(&self) -> f64 {
        let num: f64 = self.coefs.iter().enumerate().skip(1).map(|(k, c)| c * self.dose.moment(k as i32)).sum();
        num / self.dose.moment(1)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "id")]
pub enum Dgp {
    /// `D ~ U[0,1]`, `ΔY = D + D² + N(0,1)`.
    Dgp1,
    /// `D ~ Beta(2,2)`, same outcome map.
    Dgp2,
    /// Doses and untreated changes drawn independently from empirical
    /// columns; no treatment effect.
    Dgp3File {
        #[serde(skip)]
        doses: Arc<Vec<f64>>,
        #[serde(skip)]
        outcomes: Arc<Vec<f64>>,
    },
    /// Stand-in for the empirical design: `D ~ 0.02 + Beta(2,5)`,
    /// `ΔY ~ N(0,1)`, no treatment effect.
    Dgp3Synthetic,
    Custom(CustomDgp),
}

#[derive(Debug, Clone, Serialize)]
pub struct DgpSpec {
    pub dgp: Dgp,
    #[serde(rename = "G")]
    pub g: usize,
    pub seed: u64,
}

/// `Beta(2,2)` by inverting its CDF `3x² - 2x³`.
pub fn beta22_inverse_cdf(u: f64) -> f64 {
    0.5 + ((1.0 - 2.0 * u).acos() / 3.0 - 2.0 * std::f64::consts::PI / 3.0).cos()
}

/// `Beta(2,5)` as the second smallest of six uniforms.
fn beta25(rng: &mut ChaCha8Rng) -> f64 {
    let mut u = [0.0; 6];
    for v in &mut u {
        *v = rng.random::<f64>();
    }
    u.sort_by(f64::total_cmp);
    u[1]
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl DgpSpec {
    pub fn new(dgp: Dgp, g: usize, seed: u64) -> Self {
        Self { dgp, g, seed }
    }

    /// Reads a DGP 3 specification from two empirical columns.
    pub fn dgp3_from_columns(doses: Vec<f64>, outcomes: Vec<f64>, g: usize, seed: u64) -> Result<Self> {
        if doses.len() < 2 || outcomes.len() < 2 {
            return Err(HadError::InsufficientData("empirical columns need at least 2 values".into()));
        }
        Ok(Self::new(Dgp::Dgp3File { doses: Arc::new(doses), outcomes: Arc::new(outcomes) }, g, seed))
    }

    /// The estimand the coverage study checks against.
    pub fn true_was(&self) -> f64 {
        match &self.dgp {
            Dgp::Dgp1 => 5.0 / 3.0,
            Dgp::Dgp2 => 1.6,
            Dgp::Dgp3File { .. } | Dgp::Dgp3Synthetic => 0.0,
            Dgp::Custom(c) => c.was(),
        }
    }

    fn rng(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        rng
    }

    /// Draws replication `rep` as `(d, dy)`.
    pub fn draw(&self, rep: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = self.rng(rep);
        let g = self.g;
        match &self.dgp {
            Dgp::Dgp1 | Dgp::Dgp2 => {
                let beta = matches!(self.dgp, Dgp::Dgp2);
                let mut d = Vec::with_capacity(g);
                let mut y = Vec::with_capacity(g);
                for _ in 0..g {
                    let u: f64 = rng.random();
                    let di = if beta { beta22_inverse_cdf(u) } else { u };
                    d.push(di);
                    y.push(di + di * di + normal(&mut rng));
                }
                (d, y)
            }
            Dgp::Dgp3Synthetic => {
                let d: Vec<f64> = (0..g).map(|_| 0.02 + beta25(&mut rng)).collect();
                let y: Vec<f64> = (0..g).map(|_| normal(&mut rng)).collect();
                (d, y)
            }
            Dgp::Dgp3File { doses, outcomes } => (resample(doses, g, &mut rng), resample(outcomes, g, &mut rng)),
            Dgp::Custom(c) => {
                let mut d = Vec::with_capacity(g);
                let mut y = Vec::with_capacity(g);
                for _ in 0..g {
                    let di = c.dose.draw(&mut rng);
                    let scale = if c.heteroskedastic { di.abs() } else { 1.0 };
                    d.push(di);
                    y.push(c.mean_fn(di) + c.noise_sd * scale * normal(&mut rng));
                }
                (d, y)
            }
        }
    }
}

/// Without replacement when the column is long enough, with replacement otherwise.
fn resample(column: &[f64], g: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if g <= column.len() {
        sample_indices(rng, column.len(), g).into_iter().map(|i| column[i]).collect()
    } else {
        (0..g).map(|_| column[rng.random_range(0..column.len())]).collect()
    }
}

/// Outcome of one coverage replication.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RepOutcome {
    pub estimate: f64,
    pub covered: bool,
    /// The interval excludes zero.
    pub rejects_zero: bool,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    pub coverage: f64,
    pub rejection_rate: f64,
    /// Successful replications.
    pub replications: usize,
    /// Replications where the estimator or test failed.
    pub failures: usize,
    /// Monte Carlo standard error of the reported proportion.
    pub mc_se: f64,
    pub truth: Option<f64>,
    pub mean_bandwidth: Option<f64>,
}

/// Runs coverage replications `reps` and returns them in index order;
/// failed replications are `None`.
pub fn run_coverage_range(
    spec: &DgpSpec,
    reps: Range<u64>,
    mode: EstimationMode,
    options: &WasOptions,
) -> Vec<Option<RepOutcome>> {
    let truth = spec.true_was();
    reps.into_par_iter()
        .map(|r| {
            let (d, dy) = spec.draw(r);
            let sample = DifferencedSample::new(dy, d).ok()?;
            let e = estimate(&sample, mode, options).ok()?;
            Some(RepOutcome {
                estimate: e.beta,
                covered: e.covers(truth),
                rejects_zero: !e.covers(0.0),
                h: e.h_used.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Aggregates replication outcomes in the given order.
pub fn summarize_coverage(outcomes: &[Option<RepOutcome>], truth: f64) -> McResult {
    let ok: Vec<&RepOutcome> = outcomes.iter().flatten().collect();
    let n = ok.len();
    let estimates: Vec<f64> = ok.iter().map(|o| o.estimate).collect();
    let covered = ok.iter().filter(|o| o.covered).count();
    let rejected = ok.iter().filter(|o| o.rejects_zero).count();
    let coverage = if n > 0 { covered as f64 / n as f64 } else { f64::NAN };
    McResult {
        mean_estimate: if n > 0 { stats::mean(&estimates) } else { f64::NAN },
        sd_estimate: stats::std_dev(&estimates),
        coverage,
        rejection_rate: if n > 0 { rejected as f64 / n as f64 } else { f64::NAN },
        replications: n,
        failures: outcomes.len() - n,
        mc_se: stats::proportion_se(coverage, n.max(1)),
        truth: Some(truth),
        mean_bandwidth: (n > 0).then(|| ok.iter().map(|o| o.h).sum::<f64>() / n as f64),
    }
}

/// Coverage of the bias-corrected interval for the DGP's true WAS.
pub fn run_coverage_study(spec: &DgpSpec, replications: usize, options: &WasOptions) -> Result<McResult> {
    if replications < 100 {
        return Err(HadError::InvalidArgument(format!("at least 100 replications are required, got {replications}")));
    }
    let outcomes = run_coverage_range(spec, 0..replications as u64, EstimationMode::Qug, options);
    Ok(summarize_coverage(&outcomes, spec.true_was()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedTest {
    Qug,
    Stute,
    Yatchew,
    /// Yatchew's statistic without the heteroskedasticity correction.
    YatchewNonrobust,
    Poly,
}

/// Settings for [`run_size_power`].
#[derive(Debug, Clone, Copy)]
pub struct TestSettings {
    pub alpha: f64,
    pub draws: usize,
    pub mode: TestMode,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self { alpha: 0.05, draws: 500, mode: TestMode::Linearity }
    }
}

fn bootstrap_seed(seed: u64, rep: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ rep
}

fn one_test(test: NamedTest, spec: &DgpSpec, rep: u64, settings: &TestSettings) -> Result<bool> {
    let (d, y) = spec.draw(rep);
    let a = settings.alpha;
    Ok(match test {
        NamedTest::Qug => test_qug(&d, a)?.reject,
        NamedTest::Stute => {
            stute_test(&d, &y, settings.mode, settings.draws, bootstrap_seed(spec.seed, rep))?.p_value < a
        }
        NamedTest::Yatchew => yatchew_test(&d, &y, a)?.p_value < a,
        NamedTest::YatchewNonrobust => yatchew_test(&d, &y, a)?.p_value_nonrobust < a,
        NamedTest::Poly => poly_test_discrete(&d, &y, settings.mode)?.p_value < a,
    })
}

/// Rejection decisions for replications `reps`, in index order.
pub fn run_rejections_range(
    test: NamedTest,
    spec: &DgpSpec,
    reps: Range<u64>,
    settings: &TestSettings,
) -> Vec<Option<bool>> {
    reps.into_par_iter().map(|r| one_test(test, spec, r, settings).ok()).collect()
}

pub fn summarize_rejections(outcomes: &[Option<bool>]) -> McResult {
    let n = outcomes.iter().flatten().count();
    let rejected = outcomes.iter().flatten().filter(|&&r| r).count();
    let rate = if n > 0 { rejected as f64 / n as f64 } else { f64::NAN };
    McResult {
        mean_estimate: f64::NAN,
        sd_estimate: f64::NAN,
        coverage: f64::NAN,
        rejection_rate: rate,
        replications: n,
        failures: outcomes.len() - n,
        mc_se: stats::proportion_se(rate, n.max(1)),
        truth: None,
        mean_bandwidth: None,
    }
}

/// Rejection rates under a null and an alternative design.
pub fn run_size_power(
    test: NamedTest,
    null: &DgpSpec,
    alt: &DgpSpec,
    replications: usize,
    settings: &TestSettings,
) -> Result<(McResult, McResult)> {
    if replications == 0 {
        return Err(HadError::InvalidArgument("at least one replication is required".into()));
    }
    let r = 0..replications as u64;
    Ok((
        summarize_rejections(&run_rejections_range(test, null, r.clone(), settings)),
        summarize_rejections(&run_rejections_range(test, alt, r, settings)),
    ))
}
