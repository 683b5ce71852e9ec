//! C ABI for the `tvpt` library.
//!
//! Conventions:
//! - every fallible function returns a [`TvptStatus`]; outputs go through
//!   caller-provided pointers and are written only on success (or, for
//!   [`TvptStatus::NotConverged`], with the last iterate);
//! - gradient patterns are opaque [`TvptPattern`] handles created by
//!   `tvpt_pattern_*` constructors and released with [`tvpt_pattern_free`];
//! - the message for the most recent failure on the calling thread is
//!   available from [`tvpt_last_error_message`];
//! - panics never cross the boundary; they are reported as
//!   [`TvptStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use tvpt::geometry::{self, DistanceOptions};
use tvpt::pattern::{self, GradientPattern};
use tvpt::solver::{self, Matrix, SolveOptions};
use tvpt::DimensionEstimate;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotConverged = 3,
    Panic = 4,
}

/// Opaque gradient pattern: the sign of each slot of `Bx`, zero on flat slots.
pub struct TvptPattern {
    inner: GradientPattern,
}

/// Residuals of the weak-decomposability certificate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TvptCertificate {
    pub max_abs: f64,
    pub row_residual: f64,
    pub orthogonality_residual: f64,
    pub signs_match: bool,
    pub pass: bool,
}

/// Monte Carlo estimate of a mean squared distance. `lambda_star` is NaN for
/// the cone estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TvptEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub lambda_star: f64,
    pub samples: usize,
    pub capped: bool,
}

/// Diagnostics of one equality-constrained solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TvptSolveInfo {
    pub feas_residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(TvptStatus, String);

impl From<tvpt::Error> for Fail {
    fn from(e: tvpt::Error) -> Self {
        Fail(TvptStatus::InvalidArgument, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TvptStatus::NullPointer, format!("{what} is null"))
}

/// Run `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> TvptStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            TvptStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            TvptStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn pattern_ref<'a>(p: *const TvptPattern) -> Result<&'a GradientPattern, Fail> {
    p.as_ref().map(|h| &h.inner).ok_or_else(|| null("pattern"))
}

fn check_len(got: usize, expected: usize, what: &str) -> Result<(), Fail> {
    if got == expected {
        Ok(())
    } else {
        Err(Fail(
            TvptStatus::InvalidArgument,
            format!("{what} has length {got}, expected {expected}"),
        ))
    }
}

fn estimate(e: DimensionEstimate) -> TvptEstimate {
    TvptEstimate {
        mean: e.mean,
        stderr: e.stderr,
        lambda_star: e.lambda_star.unwrap_or(f64::NAN),
        samples: e.samples,
        capped: e.capped,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tvpt_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(s) => s,
            Err(_) => panic!("version contains NUL"),
        };
    VERSION.as_ptr()
}

/// Message for the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn tvpt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Pattern of a signal of length `n`; differences of magnitude at most
/// `tie_tol` count as flat.
///
/// # Safety
/// `signal` must point to `n` readable doubles and `out` to writable storage
/// for one handle.
#[no_mangle]
pub unsafe extern "C" fn tvpt_pattern_from_signal(
    signal: *const f64,
    n: usize,
    tie_tol: f64,
    out: *mut *mut TvptPattern,
) -> TvptStatus {
    guard(|| {
        let x = input(signal, n, "signal")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = pattern::extract_pattern(x, tie_tol)?;
        *out = Box::into_raw(Box::new(TvptPattern { inner }));
        Ok(())
    })
}

/// Uniformly random pattern with `k` jumps of random sign on a signal of length `n`.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tvpt_pattern_random(
    n: usize,
    k: usize,
    seed: u64,
    out: *mut *mut TvptPattern,
) -> TvptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = pattern::random_pattern(n, k, seed)?;
        *out = Box::into_raw(Box::new(TvptPattern { inner }));
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `p` must be null or a handle from a `tvpt_pattern_*` constructor that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn tvpt_pattern_free(p: *mut TvptPattern) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Signal length `n` of the pattern, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tvpt_pattern_signal_len(p: *const TvptPattern) -> usize {
    p.as_ref().map_or(0, |h| h.inner.signal_len())
}

/// Number of jumps (nonzero gradient slots), 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tvpt_pattern_jump_count(p: *const TvptPattern) -> usize {
    p.as_ref().map_or(0, |h| h.inner.jump_count())
}

/// Write the subgradient certificate `v0` (length `n - 1`) to `out`.
///
/// # Safety
/// `p` must be a live handle and `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tvpt_construct_v0(
    p: *const TvptPattern,
    out: *mut f64,
    out_len: usize,
) -> TvptStatus {
    guard(|| {
        let pat = pattern_ref(p)?;
        check_len(out_len, pat.gradient_len(), "out")?;
        let dst = output(out, out_len, "out")?;
        dst.copy_from_slice(&pattern::construct_v0(pat));
        Ok(())
    })
}

/// Build `v0` and verify weak decomposability with `samples` random members
/// of the subdifferential.
///
/// # Safety
/// `p` must be a live handle and `out` must point to a writable certificate.
#[no_mangle]
pub unsafe extern "C" fn tvpt_certify(
    p: *const TvptPattern,
    tol: f64,
    samples: usize,
    seed: u64,
    out: *mut TvptCertificate,
) -> TvptStatus {
    guard(|| {
        let pat = pattern_ref(p)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let v0 = pattern::construct_v0(pat);
        let c = pattern::verify_weak_decomposability(pat, &v0, tol, samples, seed)?;
        *out = TvptCertificate {
            max_abs: c.max_abs,
            row_residual: c.row_residual,
            orthogonality_residual: c.orthogonality_residual,
            signs_match: c.signs_match,
            pass: c.pass,
        };
        Ok(())
    })
}

/// Squared distance from `g` (length `n`) to `lambda` times the subdifferential.
///
/// # Safety
/// `p` must be a live handle, `g` must point to `g_len` readable doubles and
/// `value` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn tvpt_dist_sq_scaled(
    p: *const TvptPattern,
    g: *const f64,
    g_len: usize,
    lambda: f64,
    value: *mut f64,
) -> TvptStatus {
    guard(|| {
        let pat = pattern_ref(p)?;
        let g = input(g, g_len, "g")?;
        let value = value.as_mut().ok_or_else(|| null("value"))?;
        *value =
            geometry::dist_sq_scaled_subdiff(g, lambda, pat, &DistanceOptions::default())?.value;
        Ok(())
    })
}

/// Squared distance from `g` to the cone generated by the subdifferential, and
/// the minimizing scale (`lambda` may be null).
///
/// # Safety
/// `p` must be a live handle, `g` must point to `g_len` readable doubles,
/// `value` to a writable double and `lambda` to a writable double or null.
#[no_mangle]
pub unsafe extern "C" fn tvpt_dist_sq_cone(
    p: *const TvptPattern,
    g: *const f64,
    g_len: usize,
    value: *mut f64,
    lambda: *mut f64,
) -> TvptStatus {
    guard(|| {
        let pat = pattern_ref(p)?;
        let g = input(g, g_len, "g")?;
        let value = value.as_mut().ok_or_else(|| null("value"))?;
        let r = geometry::dist_sq_cone(g, pat, &DistanceOptions::default())?;
        *value = r.value;
        if let Some(l) = lambda.as_mut() {
            *l = r.lambda;
        }
        Ok(())
    })
}

/// Monte Carlo estimate of `min_lambda E dist(g, lambda subdiff)^2`.
///
/// # Safety
/// `p` must be a live handle and `out` must point to a writable estimate.
#[no_mangle]
pub unsafe extern "C" fn tvpt_minimize_expected_dist(
    p: *const TvptPattern,
    samples: usize,
    seed: u64,
    out: *mut TvptEstimate,
) -> TvptStatus {
    guard(|| {
        let pat = pattern_ref(p)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = estimate(geometry::minimize_expected_dist(pat, samples, seed)?);
        Ok(())
    })
}

/// Monte Carlo estimate of `E dist(g, cone(subdiff))^2`.
///
/// # Safety
/// `p` must be a live handle and `out` must point to a writable estimate.
#[no_mangle]
pub unsafe extern "C" fn tvpt_estimate_cone_dim(
    p: *const TvptPattern,
    samples: usize,
    seed: u64,
    out: *mut TvptEstimate,
) -> TvptStatus {
    guard(|| {
        let pat = pattern_ref(p)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = estimate(geometry::estimate_cone_dim(pat, samples, seed)?);
        Ok(())
    })
}

/// Solve `min ||Bx||_1 s.t. Ax = y` for a row-major `m x n` matrix `a`.
///
/// `max_iter = 0` and `feas_tol <= 0` select the defaults. On
/// [`TvptStatus::NotConverged`] `x_out` and `info` still hold the last iterate.
///
/// # Safety
/// `a` must point to `m * n` readable doubles, `y` to `m`, `x_out` to `n`
/// writable doubles, and `info` to a writable struct or be null.
#[no_mangle]
pub unsafe extern "C" fn tvpt_solve_tv_equality(
    a: *const f64,
    m: usize,
    n: usize,
    y: *const f64,
    max_iter: usize,
    feas_tol: f64,
    x_out: *mut f64,
    info: *mut TvptSolveInfo,
) -> TvptStatus {
    guard(|| {
        let size = m
            .checked_mul(n)
            .ok_or_else(|| Fail(TvptStatus::InvalidArgument, "m * n overflows".into()))?;
        let mat = Matrix::from_row_major(m, n, input(a, size, "a")?.to_vec())?;
        let y = input(y, m, "y")?;
        let x_out = output(x_out, n, "x_out")?;
        let mut opts = SolveOptions::default();
        if max_iter > 0 {
            opts.max_iter = max_iter;
        }
        if feas_tol > 0.0 {
            opts.feas_tol = feas_tol;
        }
        let r = solver::solve_tv_equality(&mat, y, &opts)?;
        x_out.copy_from_slice(&r.x_hat);
        if let Some(info) = info.as_mut() {
            *info = TvptSolveInfo {
                feas_residual: r.feas_residual,
                objective: r.objective,
                iterations: r.iterations,
                converged: r.converged,
            };
        }
        if r.converged {
            Ok(())
        } else {
            Err(Fail(
                TvptStatus::NotConverged,
                format!("iteration cap reached after {} iterations", r.iterations),
            ))
        }
    })
}
