//! C interface to the mixflow pipeline.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free` function. Every fallible call returns a
//! [`MixflowStatus`]; the message of the last failure on the calling thread is
//! available from [`mixflow_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mixflow::config::{parse_config, ExperimentConfig};
use mixflow::experiment::{run_experiment, RunOutput};
use mixflow::output::write_outputs;
use mixflow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Numerical = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Parsed experiment configuration.
pub struct MixflowConfig(ExperimentConfig);

/// Trajectories and metrics of a finished run.
pub struct MixflowResult(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MixflowStatus, msg: impl Into<String>) -> MixflowStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> MixflowStatus {
    match err {
        Error::Io { .. } => MixflowStatus::Io,
        e if e.is_numerical() => MixflowStatus::Numerical,
        _ => MixflowStatus::InvalidConfig,
    }
}

fn guard(f: impl FnOnce() -> MixflowStatus) -> MixflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == MixflowStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(_) => fail(MixflowStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, MixflowStatus> {
    if s.is_null() {
        return Err(fail(MixflowStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(MixflowStatus::InvalidUtf8, "string is not UTF-8"))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn mixflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a JSON config; an empty string gives the defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mixflow_config_parse(json: *const c_char, out: *mut *mut MixflowConfig) -> MixflowStatus {
    guard(|| {
        if out.is_null() {
            return fail(MixflowStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_config(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(MixflowConfig(cfg)));
                MixflowStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Serializes a config to JSON. Free the string with [`mixflow_string_free`].
///
/// # Safety
/// `cfg` must come from [`mixflow_config_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mixflow_config_to_json(cfg: *const MixflowConfig, out: *mut *mut c_char) -> MixflowStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return fail(MixflowStatus::NullPointer, "null pointer");
        }
        *out = CString::new((*cfg).0.to_json()).expect("json has no NUL").into_raw();
        MixflowStatus::Ok
    })
}

/// # Safety
/// `cfg` must come from [`mixflow_config_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mixflow_config_free(cfg: *mut MixflowConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured experiment (baseline or controlled).
///
/// # Safety
/// `cfg` must come from [`mixflow_config_parse`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mixflow_run(cfg: *const MixflowConfig, out: *mut *mut MixflowResult) -> MixflowStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return fail(MixflowStatus::NullPointer, "null pointer");
        }
        let cfg = &(*cfg).0;
        let label = if cfg.controlled { format!("{}-n{}", cfg.cost_kind, cfg.horizon_splits) } else { "uncontrolled".into() };
        match run_experiment(cfg, &label) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(MixflowResult(r)));
                MixflowStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `res` must come from [`mixflow_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_free(res: *mut MixflowResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of cells, or 0 for a null handle.
///
/// # Safety
/// `res` must come from [`mixflow_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_cells(res: *const MixflowResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.grid.nx)
}

/// Number of stored time levels (`nt + 1`), or 0 for a null handle.
///
/// # Safety
/// `res` must come from [`mixflow_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_steps(res: *const MixflowResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.total.steps())
}

/// Copies the normalized L2 and H^-1 deviation series. Either output may be
/// null; non-null buffers need room for [`mixflow_result_steps`] values.
///
/// # Safety
/// Non-null buffers must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_metrics(
    res: *const MixflowResult,
    normalized_l2: *mut f64,
    hm1_deviation: *mut f64,
    len: usize,
) -> MixflowStatus {
    guard(|| {
        let Some(r) = res.as_ref() else {
            return fail(MixflowStatus::NullPointer, "null result");
        };
        let s = &r.0.summary;
        if len < s.normalized_l2.len() {
            return fail(MixflowStatus::OutOfRange, format!("buffer holds {len} values, need {}", s.normalized_l2.len()));
        }
        if !normalized_l2.is_null() {
            ptr::copy_nonoverlapping(s.normalized_l2.as_ptr(), normalized_l2, s.normalized_l2.len());
        }
        if !hm1_deviation.is_null() {
            ptr::copy_nonoverlapping(s.hm1_deviation.as_ptr(), hm1_deviation, s.hm1_deviation.len());
        }
        MixflowStatus::Ok
    })
}

/// Copies `rho1`, `rho2` and the total density at one time level. Outputs
/// may be null; non-null buffers need room for [`mixflow_result_cells`] values.
///
/// # Safety
/// Non-null buffers must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_densities(
    res: *const MixflowResult,
    step: usize,
    rho1: *mut f64,
    rho2: *mut f64,
    total: *mut f64,
    len: usize,
) -> MixflowStatus {
    guard(|| {
        let Some(r) = res.as_ref() else {
            return fail(MixflowStatus::NullPointer, "null result");
        };
        let r = &r.0;
        if step >= r.total.steps() {
            return fail(MixflowStatus::OutOfRange, format!("step {step} beyond {}", r.total.steps() - 1));
        }
        if len < r.grid.nx {
            return fail(MixflowStatus::OutOfRange, format!("buffer holds {len} values, need {}", r.grid.nx));
        }
        for (src, dst) in [(&r.rho1, rho1), (&r.rho2, rho2), (&r.total, total)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.slice(step).as_ptr(), dst, r.grid.nx);
            }
        }
        MixflowStatus::Ok
    })
}

/// Run summary as JSON. Free the string with [`mixflow_string_free`].
///
/// # Safety
/// `res` must come from [`mixflow_run`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_summary_json(res: *const MixflowResult, out: *mut *mut c_char) -> MixflowStatus {
    guard(|| {
        if res.is_null() || out.is_null() {
            return fail(MixflowStatus::NullPointer, "null pointer");
        }
        let json = serde_json::to_string(&(*res).0.summary).expect("summary serializes");
        *out = CString::new(json).expect("json has no NUL").into_raw();
        MixflowStatus::Ok
    })
}

/// Writes the CSV, JSON and (when `emit_svg` is nonzero) SVG files into `dir`.
///
/// # Safety
/// `res` must come from [`mixflow_run`]; `dir` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_write(res: *const MixflowResult, dir: *const c_char, emit_svg: c_int) -> MixflowStatus {
    guard(|| {
        let Some(r) = res.as_ref() else {
            return fail(MixflowStatus::NullPointer, "null result");
        };
        let dir = match read_str(dir) {
            Ok(d) => PathBuf::from(d),
            Err(s) => return s,
        };
        match write_outputs(&r.0, &dir, emit_svg != 0) {
            Ok(_) => MixflowStatus::Ok,
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn mixflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
