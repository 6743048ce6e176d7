mod common;

use had::sim::{
    beta22_inverse_cdf, run_coverage_range, run_coverage_study, run_rejections_range, run_size_power,
    summarize_coverage, CustomDgp, Dgp, DgpSpec, DoseLaw, NamedTest, TestSettings,
};
use had::was::{EstimationMode, WasOptions};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let spec = DgpSpec::new(Dgp::Dgp2, 200, 17);
    let options = WasOptions::default();
    let one = in_pool(1, || run_coverage_range(&spec, 0..40, EstimationMode::Qug, &options));
    let four = in_pool(4, || run_coverage_range(&spec, 0..40, EstimationMode::Qug, &options));
    let a = summarize_coverage(&one, 1.6);
    let b = summarize_coverage(&four, 1.6);
    assert_eq!(a.mean_estimate.to_bits(), b.mean_estimate.to_bits());
    assert_eq!(a.coverage, b.coverage);

    let settings = TestSettings { draws: 199, ..TestSettings::default() };
    let t1 = in_pool(1, || run_rejections_range(NamedTest::Stute, &spec, 0..10, &settings));
    let t4 = in_pool(3, || run_rejections_range(NamedTest::Stute, &spec, 0..10, &settings));
    assert_eq!(t1, t4);
}

#[test]
fn split_runs_pool_to_the_full_run() {
    let spec = DgpSpec::new(Dgp::Dgp1, 150, 18);
    let options = WasOptions::default();
    let full = run_coverage_range(&spec, 0..60, EstimationMode::Qug, &options);
    let mut pooled = run_coverage_range(&spec, 0..25, EstimationMode::Qug, &options);
    pooled.extend(run_coverage_range(&spec, 25..60, EstimationMode::Qug, &options));
    let a = summarize_coverage(&full, 5.0 / 3.0);
    let b = summarize_coverage(&pooled, 5.0 / 3.0);
    assert_eq!(a.mean_estimate.to_bits(), b.mean_estimate.to_bits());
    assert_eq!(a.sd_estimate.to_bits(), b.sd_estimate.to_bits());
    assert_eq!((a.coverage, a.replications), (b.coverage, b.replications));
}

#[test]
fn draws_are_reproducible_per_replication() {
    let spec = DgpSpec::new(Dgp::Dgp1, 50, 19);
    assert_eq!(spec.draw(3), spec.draw(3));
    assert_ne!(spec.draw(3).0, spec.draw(4).0);
    assert_ne!(spec.draw(3).0, DgpSpec::new(Dgp::Dgp1, 50, 20).draw(3).0);
}

#[test]
fn true_values_of_the_designs() {
    assert_eq!(DgpSpec::new(Dgp::Dgp1, 10, 0).true_was(), 5.0 / 3.0);
    assert_eq!(DgpSpec::new(Dgp::Dgp2, 10, 0).true_was(), 1.6);
    assert_eq!(DgpSpec::new(Dgp::Dgp3Synthetic, 10, 0).true_was(), 0.0);
    // d ~ U[0, 2], m(d) = d + d²: E[D + D²] / E[D] = (1 + 4/3) / 1.
    let custom = CustomDgp { dose: DoseLaw::Uniform { low: 0.0, high: 2.0 }, coefs: vec![0.5, 1.0, 1.0], noise_sd: 1.0, heteroskedastic: false };
    assert!((custom.was() - 7.0 / 3.0).abs() < 1e-12);
    let discrete = CustomDgp { dose: DoseLaw::Discrete { values: vec![1.0, 3.0] }, coefs: vec![0.0, 0.0, 1.0], noise_sd: 0.0, heteroskedastic: false };
    assert!((discrete.was() - 5.0 / 2.0).abs() < 1e-12);
}

#[test]
fn dose_laws_have_the_right_moments() {
    for u in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
        let x = beta22_inverse_cdf(u);
        assert!((3.0 * x * x - 2.0 * x * x * x - u).abs() < 1e-12);
    }
    let n = 200_000;
    let (d2, _) = DgpSpec::new(Dgp::Dgp2, n, 1).draw(0);
    let m2 = d2.iter().sum::<f64>() / n as f64;
    let v2 = d2.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / n as f64;
    assert!((m2 - 0.5).abs() < 0.003 && (v2 - 0.05).abs() < 0.001);
    let (d3, y3) = DgpSpec::new(Dgp::Dgp3Synthetic, n, 1).draw(0);
    let m3 = d3.iter().sum::<f64>() / n as f64;
    assert!((m3 - (0.02 + 2.0 / 7.0)).abs() < 0.003);
    assert!(d3.iter().all(|&v| v > 0.02 && v < 1.02));
    assert!((y3.iter().sum::<f64>() / n as f64).abs() < 0.01);
}

#[test]
fn empirical_columns_are_resampled() {
    let doses: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
    let outcomes: Vec<f64> = (1..=50).map(|i| -(i as f64)).collect();
    let spec = DgpSpec::dgp3_from_columns(doses.clone(), outcomes, 30, 5).unwrap();
    let (d, y) = spec.draw(0);
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    assert_eq!(sorted.len(), 30, "draws without replacement when G <= N");
    assert!(d.iter().all(|v| doses.contains(v)));
    assert!(y.iter().all(|v| *v <= -1.0));
    let big = DgpSpec::dgp3_from_columns(doses.clone(), doses.clone(), 200, 5).unwrap();
    assert_eq!(big.draw(0).0.len(), 200);
    assert!(DgpSpec::dgp3_from_columns(vec![1.0], vec![1.0], 10, 0).is_err());
}

#[test]
fn coverage_study_validates_and_reports_truth() {
    let spec = DgpSpec::new(Dgp::Dgp1, 100, 6);
    assert!(run_coverage_study(&spec, 50, &WasOptions::default()).is_err());
    let m = run_coverage_study(&spec, 100, &WasOptions::default()).unwrap();
    assert_eq!(m.truth, Some(5.0 / 3.0));
    assert_eq!(m.replications + m.failures, 100);
    assert!(m.coverage > 0.75 && m.mean_bandwidth.unwrap() > 0.0);
}

#[test]
fn size_and_power_for_the_qug_test() {
    let null = DgpSpec::new(Dgp::Dgp1, 500, 8);
    let alt = DgpSpec::new(
        Dgp::Custom(CustomDgp { dose: DoseLaw::Uniform { low: 0.3, high: 1.3 }, coefs: vec![0.0], noise_sd: 1.0, heteroskedastic: false }),
        500,
        8,
    );
    let (size, power) = run_size_power(NamedTest::Qug, &null, &alt, 2000, &TestSettings::default()).unwrap();
    assert!((size.rejection_rate - 0.05).abs() < 0.015);
    assert!(power.rejection_rate > 0.99);
    assert!(run_size_power(NamedTest::Qug, &null, &alt, 0, &TestSettings::default()).is_err());
}
