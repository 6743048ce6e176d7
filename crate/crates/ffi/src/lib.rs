//! C interface to the `had` estimators and tests.
//!
//! Samples live behind an opaque [`HadSample`] handle created by
//! [`had_sample_new`] and released with [`had_sample_free`]. Every fallible
//! function returns a [`HadStatus`]; on failure, [`had_last_error`] returns a
//! message for the calling thread. Panics are caught at the boundary and
//! reported as [`HadStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use had::linearity::{self, TestMode};
use had::local_poly::{Kernel, KernelSpec};
use had::twfe;
use had::was::{self, EstimationMode, WasOptions};
use had::{DifferencedSample, HadError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientData = 3,
    DegenerateDose = 4,
    Singular = 5,
    NoMassPoint = 6,
    UntreatedUnits = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HadKernel {
    Epanechnikov = 0,
    Triangular = 1,
    Uniform = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HadMode {
    /// Boundary at zero.
    Qug = 0,
    /// Boundary at the lowest dose.
    Shifted = 1,
    /// Ratio estimator at a mass point.
    MassPoint = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HadTestMode {
    Linearity = 0,
    MeanIndependence = 1,
}

/// Opaque per-unit sample of outcome changes and doses.
pub struct HadSample {
    inner: DifferencedSample,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HadWasResult {
    pub beta: f64,
    pub mu0_hat: f64,
    pub bias_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// NaN for the mass-point estimator.
    pub h_used: f64,
    pub b_used: f64,
    pub boundary: f64,
    pub n_eff: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HadQugResult {
    pub d1: f64,
    pub d2: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub reject: bool,
    pub ties_collapsed: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HadStuteResult {
    pub statistic: f64,
    pub p_value: f64,
    pub draws: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HadYatchewResult {
    pub sig2_lin: f64,
    pub sig2_diff: f64,
    pub sig_w4: f64,
    /// NaN when every residual is zero.
    pub t_hr: f64,
    pub p_value: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HadTwfeResult {
    pub beta_fe: f64,
    pub beta0: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub dof: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HadWeightSummary {
    pub n_positive: usize,
    pub n_negative: usize,
    pub negative_sum: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &HadError) -> HadStatus {
    match e {
        HadError::DegenerateDose | HadError::NoRoomForTestability => HadStatus::DegenerateDose,
        HadError::Singular { .. } => HadStatus::Singular,
        HadError::NoMassPoint => HadStatus::NoMassPoint,
        HadError::UntreatedUnits { .. } => HadStatus::UntreatedUnits,
        HadError::InsufficientData(_) | HadError::InsufficientObservations { .. } => HadStatus::InsufficientData,
        _ => HadStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), HadError>>(f: F) -> HadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HadStatus::Ok,
        Ok(Err(e)) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            HadStatus::Panic
        }
    }
}

fn null_error(what: &str) -> HadError {
    HadError::InvalidArgument(format!("null pointer: {what}"))
}

/// # Safety
/// `ptr` must be null or point to `n` readable doubles.
unsafe fn slice<'a>(ptr: *const f64, n: usize, what: &str) -> Result<&'a [f64], HadError> {
    if ptr.is_null() {
        return Err(null_error(what));
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

fn kernel_spec(k: HadKernel) -> KernelSpec {
    KernelSpec::new(match k {
        HadKernel::Epanechnikov => Kernel::Epanechnikov,
        HadKernel::Triangular => Kernel::Triangular,
        HadKernel::Uniform => Kernel::Uniform,
    })
}

fn test_mode(m: HadTestMode) -> TestMode {
    match m {
        HadTestMode::Linearity => TestMode::Linearity,
        HadTestMode::MeanIndependence => TestMode::MeanIndependence,
    }
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn had_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `n` outcome changes and doses into a new sample. Returns null on
/// failure and writes the reason to `status` when it is not null.
///
/// # Safety
/// `dy` and `d` must point to `n` readable doubles; `status` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn had_sample_new(
    dy: *const f64,
    d: *const f64,
    n: usize,
    status: *mut HadStatus,
) -> *mut HadSample {
    let mut out: *mut HadSample = ptr::null_mut();
    let s = guard(|| {
        let dy = slice(dy, n, "dy")?.to_vec();
        let d = slice(d, n, "d")?.to_vec();
        let inner = DifferencedSample::new(dy, d)?;
        out = Box::into_raw(Box::new(HadSample { inner }));
        Ok(())
    });
    if !status.is_null() {
        *status = s;
    }
    out
}

/// # Safety
/// `sample` must be null or a pointer returned by [`had_sample_new`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn had_sample_free(sample: *mut HadSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Number of units, or 0 for a null handle.
///
/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn had_sample_len(sample: *const HadSample) -> usize {
    sample.as_ref().map_or(0, |s| s.inner.g_count())
}

/// WAS estimate. A `bandwidth <= 0` triggers data-driven selection.
///
/// # Safety
/// `sample` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn had_estimate(
    sample: *const HadSample,
    mode: HadMode,
    kernel: HadKernel,
    alpha: f64,
    bandwidth: f64,
    out: *mut HadWasResult,
) -> HadStatus {
    if sample.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return HadStatus::NullPointer;
    }
    guard(|| {
        let s = &(*sample).inner;
        let options = WasOptions {
            kernel: kernel_spec(kernel),
            alpha,
            bandwidth: (bandwidth > 0.0).then_some(bandwidth),
            ..WasOptions::default()
        };
        let mode = match mode {
            HadMode::Qug => EstimationMode::Qug,
            HadMode::Shifted => EstimationMode::Shifted,
            HadMode::MassPoint => EstimationMode::MassPoint,
        };
        let e = was::estimate(s, mode, &options)?;
        *out = HadWasResult {
            beta: e.beta,
            mu0_hat: e.mu0_hat,
            bias_hat: e.bias_hat,
            se: e.se,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            h_used: e.h_used.unwrap_or(f64::NAN),
            b_used: e.b_used.unwrap_or(f64::NAN),
            boundary: e.boundary,
            n_eff: e.n_eff,
        };
        Ok(())
    })
}

/// Test for a quasi-untreated group on `n` strictly positive doses.
///
/// # Safety
/// `d` must point to `n` readable doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn had_test_qug(d: *const f64, n: usize, alpha: f64, out: *mut HadQugResult) -> HadStatus {
    if d.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return HadStatus::NullPointer;
    }
    guard(|| {
        let r = had::test_qug(slice(d, n, "d")?, alpha)?;
        *out = HadQugResult {
            d1: r.d1,
            d2: r.d2,
            t_stat: r.t_stat,
            p_value: r.p_value,
            reject: r.reject,
            ties_collapsed: r.ties_collapsed,
        };
        Ok(())
    })
}

/// Stute test with a wild bootstrap of `draws` replications.
///
/// # Safety
/// `sample` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn had_stute_test(
    sample: *const HadSample,
    mode: HadTestMode,
    draws: usize,
    seed: u64,
    out: *mut HadStuteResult,
) -> HadStatus {
    if sample.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return HadStatus::NullPointer;
    }
    guard(|| {
        let s = &(*sample).inner;
        let r = linearity::stute_test(&s.d, &s.dy, test_mode(mode), draws, seed)?;
        *out = HadStuteResult { statistic: r.statistic, p_value: r.p_value, draws: r.draws };
        Ok(())
    })
}

/// Heteroskedasticity-robust Yatchew test.
///
/// # Safety
/// `sample` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn had_yatchew_test(sample: *const HadSample, alpha: f64, out: *mut HadYatchewResult) -> HadStatus {
    if sample.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return HadStatus::NullPointer;
    }
    guard(|| {
        let s = &(*sample).inner;
        let r = linearity::yatchew_test(&s.d, &s.dy, alpha)?;
        *out = HadYatchewResult {
            sig2_lin: r.sig2_lin,
            sig2_diff: r.sig2_diff,
            sig_w4: r.sig_w4,
            t_hr: r.t_hr.unwrap_or(f64::NAN),
            p_value: r.p_value,
        };
        Ok(())
    })
}

/// TWFE slope with HC2 standard error and Bell–McCaffrey interval.
///
/// # Safety
/// `sample` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn had_twfe_fit(sample: *const HadSample, alpha: f64, out: *mut HadTwfeResult) -> HadStatus {
    if sample.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return HadStatus::NullPointer;
    }
    guard(|| {
        let e = twfe::twfe_fit(&(*sample).inner, alpha)?;
        *out = HadTwfeResult {
            beta_fe: e.beta_fe,
            beta0: e.beta0,
            se: e.se,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            dof: e.dof,
        };
        Ok(())
    })
}

/// Writes the `n` TWFE weights to `weights` and a summary to `out`.
///
/// # Safety
/// `d` must point to `n` readable doubles, `weights` to `n` writable doubles, `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn had_twfe_weights(
    d: *const f64,
    n: usize,
    weights: *mut f64,
    out: *mut HadWeightSummary,
) -> HadStatus {
    if d.is_null() || weights.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return HadStatus::NullPointer;
    }
    guard(|| {
        let r = twfe::twfe_weights(slice(d, n, "d")?)?;
        std::slice::from_raw_parts_mut(weights, n).copy_from_slice(&r.weights);
        *out = HadWeightSummary { n_positive: r.n_positive, n_negative: r.n_negative, negative_sum: r.negative_sum };
        Ok(())
    })
}
