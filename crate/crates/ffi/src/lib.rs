//! C ABI over `thetacg`.
//!
//! Problems and iterate histories are opaque heap handles owned by the
//! caller and released with the matching `_free` function. Every fallible
//! call returns a [`TcgStatus`]; on failure the message is kept per thread
//! and read back with [`tcg_last_error_message`]. Panics are caught at the
//! boundary and reported as `TCG_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use thetacg::cli::{build_test_case, CustomSpec, TestId};
use thetacg::diagnostics::rho;
use thetacg::krylov::{
    theta_iterates, theta_iterates_spectral, InverseProblem, IterateHistory, Termination, Tolerances,
};
use thetacg::Error;

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcgStatus {
    TCG_OK = 0,
    TCG_NULL_POINTER = 1,
    TCG_INVALID_ARGUMENT = 2,
    TCG_DIMENSION_MISMATCH = 3,
    TCG_PRECONDITION = 4,
    TCG_NUMERICAL = 5,
    TCG_PANIC = 6,
}

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcgTermination {
    TCG_ITERATION_LIMIT = 0,
    TCG_CONVERGED = 1,
    TCG_EXHAUSTED = 2,
    TCG_BREAKDOWN = 3,
}

/// An inverse problem `A f = g` with its initial guess.
pub struct TcgProblem {
    inner: InverseProblem,
    consistency: f64,
}

/// The iterates `f_0, …, f_N` of one run.
pub struct TcgHistory {
    inner: IterateHistory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TcgStatus {
    match e {
        Error::DimensionMismatch { .. } => TcgStatus::TCG_DIMENSION_MISMATCH,
        Error::InvalidArgument(_) | Error::UnknownTestCase(_) | Error::NonFinite(_) => TcgStatus::TCG_INVALID_ARGUMENT,
        Error::PreconditionViolated(_) | Error::NotSpectral(_) | Error::AtomAtZero | Error::Inconsistent { .. } => {
            TcgStatus::TCG_PRECONDITION
        }
        _ => TcgStatus::TCG_NUMERICAL,
    }
}

struct Failure(TcgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TcgStatus::TCG_NULL_POINTER, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics.
fn guard<F>(f: F) -> TcgStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TcgStatus::TCG_OK,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TcgStatus::TCG_PANIC
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(v: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            actual: len,
        }
        .into());
    }
    if len > 0 && out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, len);
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Builds test `id` (`"1a"`, `"1b"`, `"2a"`, `"2b"`) on `n` grid points of
/// `[-half_length, half_length)`. `n = 0` selects the default grid.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcg_problem_from_test(
    id: *const c_char,
    n: usize,
    half_length: f64,
    out: *mut *mut TcgProblem,
) -> TcgStatus {
    guard(|| {
        if id.is_null() {
            return Err(null("test id"));
        }
        let text = CStr::from_ptr(id)
            .to_str()
            .map_err(|_| Failure(TcgStatus::TCG_INVALID_ARGUMENT, "test id is not UTF-8".into()))?;
        let test: TestId = text.parse()?;
        if test == TestId::Custom {
            return Err(Error::InvalidArgument("use tcg_problem_from_diagonal for custom problems".into()).into());
        }
        let (n, half_length) = if n == 0 { test.default_grid() } else { (n, half_length) };
        let case = build_test_case(test, n, half_length, None)?;
        put(
            out,
            TcgProblem {
                inner: case.problem,
                consistency: case.consistency,
            },
        )
    })
}

/// `A = diag(eigenvalues)` with initial error `error` (so the known
/// solution is `-error` and `f_0 = 0`).
///
/// # Safety
/// Both arrays must hold `dim` values; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcg_problem_from_diagonal(
    eigenvalues: *const f64,
    error: *const f64,
    dim: usize,
    out: *mut *mut TcgProblem,
) -> TcgStatus {
    guard(|| {
        let spec = CustomSpec::Explicit {
            eigenvalues: slice(eigenvalues, dim, "eigenvalues")?.to_vec(),
            error: slice(error, dim, "error")?.to_vec(),
        };
        let case = build_test_case(TestId::Custom, 0, 1.0, Some(&spec))?;
        put(
            out,
            TcgProblem {
                inner: case.problem,
                consistency: case.consistency,
            },
        )
    })
}

/// # Safety
/// `problem` must come from a `tcg_problem_from_*` call (or be null) and is
/// invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tcg_problem_free(problem: *mut TcgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Dimension of the discretised problem; 0 for a null handle.
///
/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tcg_problem_dimension(problem: *const TcgProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.dim())
}

/// `‖A f − g‖ / ‖g‖` of the manufactured solution; NaN for a null handle.
///
/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tcg_problem_consistency(problem: *const TcgProblem) -> f64 {
    problem.as_ref().map_or(f64::NAN, |p| p.consistency)
}

fn iterates(problem: &InverseProblem, theta: f64, n_max: usize) -> thetacg::Result<IterateHistory> {
    if theta >= 1.0 && theta.fract() == 0.0 {
        theta_iterates(problem, theta, n_max, Tolerances::none())
    } else {
        theta_iterates_spectral(problem, theta, n_max, Tolerances::none())
    }
}

/// Writes `f_N` into `out` (length `len` = dimension). Integer `theta ≥ 1`
/// runs matrix-free; other `theta ≥ 0` use the eigenbasis.
///
/// # Safety
/// `problem` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tcg_theta_iterate(
    problem: *const TcgProblem,
    theta: f64,
    n: usize,
    out: *mut f64,
    len: usize,
) -> TcgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let h = iterates(&p.inner, theta, n)?;
        copy_out(h.iterate(n), out, len)
    })
}

/// Runs `N = 0..=n_max` and stores every iterate.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcg_run(
    problem: *const TcgProblem,
    theta: f64,
    n_max: usize,
    out: *mut *mut TcgHistory,
) -> TcgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        put(
            out,
            TcgHistory {
                inner: iterates(&p.inner, theta, n_max)?,
            },
        )
    })
}

/// # Safety
/// `history` must come from [`tcg_run`] (or be null) and is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn tcg_history_free(history: *mut TcgHistory) {
    if !history.is_null() {
        drop(Box::from_raw(history));
    }
}

/// Number of stored iterates, including `f_0`; 0 for a null handle.
///
/// # Safety
/// `history` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tcg_history_len(history: *const TcgHistory) -> usize {
    history.as_ref().map_or(0, |h| h.inner.steps.len())
}

/// # Safety
/// `history` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tcg_history_termination(history: *const TcgHistory) -> TcgTermination {
    match history.as_ref().map(|h| h.inner.termination) {
        Some(Termination::Converged) => TcgTermination::TCG_CONVERGED,
        Some(Termination::Exhausted) => TcgTermination::TCG_EXHAUSTED,
        Some(Termination::Breakdown) => TcgTermination::TCG_BREAKDOWN,
        _ => TcgTermination::TCG_ITERATION_LIMIT,
    }
}

/// Copies the `index`-th stored iterate into `out`.
///
/// # Safety
/// `history` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn tcg_history_iterate(
    history: *const TcgHistory,
    index: usize,
    out: *mut f64,
    len: usize,
) -> TcgStatus {
    guard(|| {
        let h = history.as_ref().ok_or_else(|| null("history"))?;
        let step = h.inner.steps.get(index).ok_or_else(|| {
            Failure(
                TcgStatus::TCG_INVALID_ARGUMENT,
                format!("iterate {index} out of range (history holds {})", h.inner.steps.len()),
            )
        })?;
        copy_out(&step.iterate, out, len)
    })
}

/// `ρ_σ(x) = ‖A^{σ/2}(x − P_S x)‖²` measured against the problem's known
/// solution.
///
/// # Safety
/// `problem` must be a live handle, `x` must hold `len` values and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tcg_rho(
    problem: *const TcgProblem,
    x: *const f64,
    len: usize,
    sigma: f64,
    out: *mut f64,
) -> TcgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let x = slice(x, len, "x")?;
        let v = rho(&p.inner, x, sigma)?;
        if out.is_null() {
            return Err(null("output"));
        }
        *out = v;
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tcg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
