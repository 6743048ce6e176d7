use std::ffi::CStr;
use std::ptr;

use had_ffi::*;

fn sample(dy: &[f64], d: &[f64]) -> *mut HadSample {
    let mut status = HadStatus::Panic;
    let s = unsafe { had_sample_new(dy.as_ptr(), d.as_ptr(), d.len(), &mut status) };
    assert_eq!(status, HadStatus::Ok);
    assert!(!s.is_null());
    s
}

fn last_error() -> String {
    let p = had_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn mass_point_ratio_through_the_abi() {
    let s = sample(&[0.0, 2.0, 3.0, 5.0], &[1.0, 1.0, 2.0, 3.0]);
    let mut out = HadWasResult::default();
    let st = unsafe { had_estimate(s, HadMode::MassPoint, HadKernel::Epanechnikov, 0.05, 0.0, &mut out) };
    assert_eq!(st, HadStatus::Ok);
    assert!((out.beta - 2.0).abs() < 1e-12);
    assert!(out.h_used.is_nan());
    unsafe { had_sample_free(s) };
}

#[test]
fn unit_slope_estimate() {
    let d: Vec<f64> = (1..=200).map(|i| i as f64 / 200.0).collect();
    let s = sample(&d, &d);
    assert_eq!(unsafe { had_sample_len(s) }, 200);
    let mut out = HadWasResult::default();
    let st = unsafe { had_estimate(s, HadMode::Qug, HadKernel::Epanechnikov, 0.05, 0.0, &mut out) };
    assert_eq!(st, HadStatus::Ok);
    assert!((out.beta - 1.0).abs() < 1e-6);
    unsafe { had_sample_free(s) };
}

#[test]
fn qug_reports_and_errors() {
    let d1 = 0.044;
    let d = [d1, d1 + d1 / 1.77, 0.5, 0.9];
    let mut out = HadQugResult::default();
    assert_eq!(unsafe { had_test_qug(d.as_ptr(), d.len(), 0.05, &mut out) }, HadStatus::Ok);
    assert!((out.p_value - 1.0 / 2.77).abs() < 1e-12);
    assert!(!out.reject);

    let z = [0.0, 0.5, 0.9];
    assert_eq!(unsafe { had_test_qug(z.as_ptr(), z.len(), 0.05, &mut out) }, HadStatus::UntreatedUnits);
    assert!(last_error().contains("zero dose"));
}

#[test]
fn weights_and_twfe() {
    let d = [1.0, 2.0, 3.0];
    let mut w = [0.0; 3];
    let mut summary = HadWeightSummary::default();
    assert_eq!(unsafe { had_twfe_weights(d.as_ptr(), 3, w.as_mut_ptr(), &mut summary) }, HadStatus::Ok);
    assert_eq!(w, [-0.5, 0.0, 1.5]);
    assert_eq!(summary.n_negative, 1);

    let s = sample(&[1.0, 2.0, 3.0], &d);
    let mut t = HadTwfeResult::default();
    assert_eq!(unsafe { had_twfe_fit(s, 0.05, &mut t) }, HadStatus::Ok);
    assert!((t.beta_fe - 1.0).abs() < 1e-12);
    unsafe { had_sample_free(s) };

    let flat = [2.0, 2.0, 2.0];
    assert_eq!(unsafe { had_twfe_weights(flat.as_ptr(), 3, w.as_mut_ptr(), &mut summary) }, HadStatus::DegenerateDose);
}

#[test]
fn linearity_tests_through_the_abi() {
    let d: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
    let y: Vec<f64> = d.iter().enumerate().map(|(i, v)| 1.0 + v + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
    let s = sample(&y, &d);
    let mut st = HadStuteResult::default();
    assert_eq!(unsafe { had_stute_test(s, HadTestMode::Linearity, 199, 7, &mut st) }, HadStatus::Ok);
    assert!((0.0..=1.0).contains(&st.p_value));
    assert_eq!(st.draws, 199);
    let mut ya = HadYatchewResult::default();
    assert_eq!(unsafe { had_yatchew_test(s, 0.05, &mut ya) }, HadStatus::Ok);
    assert!(ya.t_hr.is_finite());
    unsafe { had_sample_free(s) };
}

#[test]
fn invalid_inputs_are_reported() {
    let mut status = HadStatus::Ok;
    let s = unsafe { had_sample_new(ptr::null(), ptr::null(), 3, &mut status) };
    assert!(s.is_null());
    assert_eq!(status, HadStatus::InvalidArgument);
    assert!(last_error().contains("null pointer"));

    let d = [1.0, 1.0, 1.0];
    let s = unsafe { had_sample_new(d.as_ptr(), d.as_ptr(), 3, &mut status) };
    assert!(s.is_null());
    assert_eq!(status, HadStatus::DegenerateDose);

    let mut out = HadWasResult::default();
    assert_eq!(
        unsafe { had_estimate(ptr::null(), HadMode::Qug, HadKernel::Uniform, 0.05, 0.0, &mut out) },
        HadStatus::NullPointer
    );
    unsafe { had_sample_free(ptr::null_mut()) };
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/had.h")).unwrap();
    for name in [
        "had_sample_new",
        "had_sample_free",
        "had_estimate",
        "had_test_qug",
        "had_stute_test",
        "had_yatchew_test",
        "had_twfe_fit",
        "had_twfe_weights",
        "had_last_error",
        "typedef struct HadSample HadSample",
        "HAD_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
