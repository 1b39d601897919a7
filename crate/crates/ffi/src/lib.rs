//! C ABI over the progfix engine.
//!
//! Every fallible function returns a [`PfStatus`] and writes its result
//! through an out-pointer. On failure, [`pf_last_error_message`] describes
//! the error for the calling thread. Handles are opaque and must be
//! released with their matching `_free` function; strings returned by the
//! library are released with [`pf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::time::Duration;

use progfix::cluster::load_store;
use progfix::feedback::{render, Feedback};
use progfix::frontend::{compile, parse_expr, SourceUnit};
use progfix::model::Program;
use progfix::problem::Problem;
use progfix::repair::{repair_best, RepairError, RepairOptions, RepairResult};
use progfix::treedist::tree_distance;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// Source or expression text failed to parse or lower.
    Parse = 3,
    /// A problem directory or its cluster store could not be read.
    Io = 4,
    /// No stored representative has the attempt's control flow, or none
    /// could be repaired.
    NoMatch = 5,
    /// The repair budget ran out.
    Timeout = 6,
    /// The engine panicked; the handle arguments are still valid.
    Panic = 7,
}

/// A parsed and lowered attempt.
pub struct PfProgram {
    program: Program,
}

/// A problem with its inputs and stored representatives.
pub struct PfProblem {
    problem: Problem,
    specs: Vec<Program>,
}

/// A successful repair and its rendered feedback.
pub struct PfRepair {
    result: RepairResult,
    feedback: Feedback,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PfStatus, msg: impl Into<String>) -> PfStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `PfStatus::Panic`.
fn guard(f: impl FnOnce() -> PfStatus) -> PfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PfStatus::Panic, format!("internal error: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, PfStatus> {
    if p.is_null() {
        return Err(fail(PfStatus::Null, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(PfStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, PfStatus> {
    p.as_ref().ok_or_else(|| fail(PfStatus::Null, format!("{what} is null")))
}

fn out_string(s: String, out: *mut *mut c_char) -> PfStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            PfStatus::Ok
        }
        Err(_) => fail(PfStatus::Panic, "string contains a nul byte"),
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! check_out {
    ($out:expr) => {
        if $out.is_null() {
            return fail(PfStatus::Null, concat!(stringify!($out), " is null"));
        }
    };
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and lowers one attempt. `name` labels the program in repair
/// results.
///
/// # Safety
/// `name` and `source` must be null or nul-terminated strings; `out` must
/// be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_program_parse(name: *const c_char, source: *const c_char, out: *mut *mut PfProgram) -> PfStatus {
    guard(|| {
        check_out!(out);
        let name = tri!(str_arg(name, "name"));
        let source = tri!(str_arg(source, "source"));
        match compile(&SourceUnit::new(name, source)) {
            Ok(program) => {
                *out = Box::into_raw(Box::new(PfProgram { program }));
                PfStatus::Ok
            }
            Err(e) => fail(PfStatus::Parse, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must be null or a handle from [`pf_program_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_program_free(p: *mut PfProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Opens a problem directory whose cluster store has been built.
///
/// # Safety
/// `dir` must be null or a nul-terminated string; `out` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_problem_open(dir: *const c_char, out: *mut *mut PfProblem) -> PfStatus {
    guard(|| {
        check_out!(out);
        let dir = Path::new(tri!(str_arg(dir, "dir")));
        let problem = match Problem::load(dir) {
            Ok(p) => p,
            Err(e) => return fail(PfStatus::Io, e.to_string()),
        };
        let store = match load_store(dir) {
            Ok(s) => s,
            Err(e) => return fail(PfStatus::Io, e.to_string()),
        };
        if store.order.is_empty() {
            return fail(PfStatus::Io, format!("{}: no cluster store", dir.display()));
        }
        let specs = store.representatives().map(|(_, e)| e.program.clone()).collect();
        *out = Box::into_raw(Box::new(PfProblem { problem, specs }));
        PfStatus::Ok
    })
}

/// # Safety
/// `p` must be null or a handle from [`pf_problem_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_problem_free(p: *mut PfProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Whether the attempt returns the expected output on every input.
///
/// # Safety
/// Handles must be live; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_problem_is_correct(problem: *const PfProblem, program: *const PfProgram, out: *mut bool) -> PfStatus {
    guard(|| {
        check_out!(out);
        let pb = tri!(ref_arg(problem, "problem"));
        let p = tri!(ref_arg(program, "program"));
        *out = pb.problem.is_correct(&p.program);
        PfStatus::Ok
    })
}

/// Repairs an attempt against the problem's representatives within
/// `timeout_ms` milliseconds.
///
/// # Safety
/// Handles must be live; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_problem_repair(
    problem: *const PfProblem,
    program: *const PfProgram,
    timeout_ms: u64,
    out: *mut *mut PfRepair,
) -> PfStatus {
    guard(|| {
        check_out!(out);
        let pb = tri!(ref_arg(problem, "problem"));
        let p = tri!(ref_arg(program, "program"));
        let opts = RepairOptions { budget: Duration::from_millis(timeout_ms), step_limit: pb.problem.step_limit() };
        match repair_best(&pb.specs, &p.program, &pb.problem.inputs, &opts) {
            Ok(result) => {
                let feedback = render(Some(&result), &p.program, &pb.problem.config);
                *out = Box::into_raw(Box::new(PfRepair { result, feedback }));
                PfStatus::Ok
            }
            Err(e @ RepairError::Timeout) => fail(PfStatus::Timeout, e.to_string()),
            Err(e) => fail(PfStatus::NoMatch, e.to_string()),
        }
    })
}

/// # Safety
/// `r` must be null or a handle from [`pf_problem_repair`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_repair_free(r: *mut PfRepair) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Total tree-edit cost of the repair; 0 for a null handle.
///
/// # Safety
/// `r` must be null or a live repair handle.
#[no_mangle]
pub unsafe extern "C" fn pf_repair_total_cost(r: *const PfRepair) -> usize {
    r.as_ref().map_or(0, |r| r.result.total_cost)
}

/// Number of modifications in the repair; 0 for a null handle.
///
/// # Safety
/// `r` must be null or a live repair handle.
#[no_mangle]
pub unsafe extern "C" fn pf_repair_modification_count(r: *const PfRepair) -> usize {
    r.as_ref().map_or(0, |r| r.result.mods.len())
}

/// The full repair record as JSON. Free the string with
/// [`pf_string_free`].
///
/// # Safety
/// `r` must be a live repair handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn pf_repair_json(r: *const PfRepair, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        check_out!(out);
        let r = tri!(ref_arg(r, "repair"));
        out_string(serde_json::to_string(&r.result).expect("repair serializes"), out)
    })
}

/// The rendered feedback as JSON (`items` and `fallback`). Free the string
/// with [`pf_string_free`].
///
/// # Safety
/// `r` must be a live repair handle; `out` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn pf_repair_feedback_json(r: *const PfRepair, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        check_out!(out);
        let r = tri!(ref_arg(r, "repair"));
        out_string(serde_json::to_string(&r.feedback).expect("feedback serializes"), out)
    })
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Tree edit distance between two expressions in surface syntax.
///
/// # Safety
/// `a` and `b` must be null or nul-terminated strings; `out` must be null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_tree_distance(a: *const c_char, b: *const c_char, out: *mut usize) -> PfStatus {
    guard(|| {
        check_out!(out);
        let a = tri!(str_arg(a, "a"));
        let b = tri!(str_arg(b, "b"));
        let parse = |s: &str| parse_expr(s).map_err(|e| fail(PfStatus::Parse, format!("{s}: {e}")));
        let (x, y) = (tri!(parse(a)), tri!(parse(b)));
        *out = tree_distance(&x, &y);
        PfStatus::Ok
    })
}
