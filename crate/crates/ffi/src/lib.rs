//! C ABI over `whitney-core`.
//!
//! Every fallible entry point returns a [`WhitneyStatus`]. On failure a
//! message is kept per thread and can be read with [`whitney_last_error`].
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use whitney_core::cli::run::{render_report, Status};
use whitney_core::cli::{parse_config, run};
use whitney_core::matrixineq::{li_li_gap, random_family, MatrixFamily};
use whitney_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WhitneyStatus {
    Ok = 0,
    InvalidInput = 1,
    Config = 2,
    UnsupportedAmbient = 3,
    Domain = 4,
    Numerical = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Opaque family of symmetric matrices.
pub struct WhitneyFamily {
    inner: MatrixFamily,
}

/// Opaque result of a configured run.
pub struct WhitneyRun {
    exit_code: i32,
    status: Status,
    report: CString,
}

/// Terms of the commutator inequality for one family.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WhitneyLiLiGap {
    pub commutator_sum: f64,
    pub s2_sum: f64,
    pub rhs: f64,
    pub gap: f64,
    /// `gap / rhs`, or 0 when the right-hand side vanishes.
    pub ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> WhitneyStatus {
    match e {
        Error::InvalidInput(_) => WhitneyStatus::InvalidInput,
        Error::Config(_) => WhitneyStatus::Config,
        Error::UnsupportedAmbient(_) => WhitneyStatus::UnsupportedAmbient,
        Error::Domain { .. } | Error::ChartConditioning { .. } => WhitneyStatus::Domain,
        Error::AtGridPoint { source, .. } => status_of(source),
        Error::Evaluation(_) | Error::DegenerateImmersion { .. } | Error::Numerical(_) => WhitneyStatus::Numerical,
    }
}

fn fail(e: Error) -> WhitneyStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn guarded(f: impl FnOnce() -> WhitneyStatus) -> WhitneyStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            WhitneyStatus::Panic
        }
    }
}

fn null_arg(name: &str) -> WhitneyStatus {
    set_error(format!("{name} is null"));
    WhitneyStatus::NullPointer
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn whitney_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn whitney_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a family from `p` row-major `dim x dim` matrices stored back to back.
///
/// # Safety
/// `data` must point to `len` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn whitney_family_new(
    p: usize,
    dim: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut WhitneyFamily,
) -> WhitneyStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        if data.is_null() && len > 0 {
            return null_arg("data");
        }
        let slice = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        match MatrixFamily::from_flat(p, dim, slice) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(WhitneyFamily { inner }));
                WhitneyStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Seeded random family with Frobenius norm at most `scale`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn whitney_family_random(
    p: usize,
    dim: usize,
    seed: u64,
    scale: f64,
    out: *mut *mut WhitneyFamily,
) -> WhitneyStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        match random_family(p, dim, seed, scale) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(WhitneyFamily { inner }));
                WhitneyStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// The 2x2 pair that attains equality.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn whitney_family_equality_pair(out: *mut *mut WhitneyFamily) -> WhitneyStatus {
    guarded(|| {
        if out.is_null() {
            return null_arg("out");
        }
        *out = Box::into_raw(Box::new(WhitneyFamily { inner: MatrixFamily::equality_pair() }));
        WhitneyStatus::Ok
    })
}

/// # Safety
/// `family` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn whitney_family_free(family: *mut WhitneyFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// # Safety
/// `family` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn whitney_family_gap(family: *const WhitneyFamily, out: *mut WhitneyLiLiGap) -> WhitneyStatus {
    guarded(|| {
        if family.is_null() {
            return null_arg("family");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let g = li_li_gap(&(*family).inner);
        *out = WhitneyLiLiGap {
            commutator_sum: g.commutator_sum,
            s2_sum: g.s2_sum,
            rhs: g.rhs,
            gap: g.gap,
            ratio: g.ratio(),
        };
        WhitneyStatus::Ok
    })
}

/// Parses a TOML run configuration and executes it. Analysis failures and
/// failed checks still produce a handle; only an unusable configuration
/// returns an error status.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn whitney_run_config(config: *const c_char, out: *mut *mut WhitneyRun) -> WhitneyStatus {
    guarded(|| {
        if config.is_null() {
            return null_arg("config");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let text = match CStr::from_ptr(config).to_str() {
            Ok(t) => t,
            Err(e) => return fail(Error::Config(format!("configuration is not UTF-8: {e}"))),
        };
        let cfg = match parse_config(text) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let outcome = run(&cfg);
        let report = CString::new(render_report(&outcome.report)).expect("JSON has no NUL bytes");
        *out = Box::into_raw(Box::new(WhitneyRun { exit_code: outcome.exit_code, status: outcome.status, report }));
        WhitneyStatus::Ok
    })
}

/// Process exit code the CLI would return for this run.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn whitney_run_exit_code(run: *const WhitneyRun) -> i32 {
    if run.is_null() {
        return -1;
    }
    (*run).exit_code
}

/// True when the run completed and every check passed.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn whitney_run_passed(run: *const WhitneyRun) -> bool {
    !run.is_null() && (*run).status == Status::Pass
}

/// The JSON report, owned by the handle.
///
/// # Safety
/// `run` must be a live handle; the string dies with it.
#[no_mangle]
pub unsafe extern "C" fn whitney_run_report_json(run: *const WhitneyRun) -> *const c_char {
    if run.is_null() {
        return ptr::null();
    }
    (*run).report.as_ptr()
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn whitney_run_free(run: *mut WhitneyRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
