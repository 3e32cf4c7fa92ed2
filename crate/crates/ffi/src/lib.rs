//! C ABI over the difflang core.
//!
//! Handles are opaque pointers created by `*_new`/`*_parse` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`DlStatus`]; on failure [`dl_last_error`] describes the problem. Handles
//! are not thread-safe: use each one from a single thread at a time.
//! Strings returned through `char**` must be released with
//! [`dl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use difflang::ad::{self, DiffRequest, GradRequest, Wrt};
use difflang::engine::{Backend, GradientEngine};
use difflang::numdiff::NumDiffConfig;
use difflang::point::bind_point;
use difflang::printer::print_function;
use difflang::{parse, validate, CompiledProgram, Interpreter, Program};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidProgram = 4,
    UnknownFunction = 5,
    AdError = 6,
    EvalError = 7,
    PointError = 8,
    InvalidArgument = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Gradient backend selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlBackend {
    Forward = 0,
    Reverse = 1,
    Numeric = 2,
}

/// A parsed and validated program.
pub struct DlProgram {
    program: Program,
}

/// A function prepared for repeated gradient evaluation.
pub struct DlGradient {
    engine: GradientEngine,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Fail = (DlStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DlStatus::Panic
        }
    }
}

fn fail<E: std::fmt::Display>(status: DlStatus) -> impl Fn(E) -> Fail {
    move |e| (status, e.to_string())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err((DlStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DlStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| (DlStatus::NullArgument, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err((DlStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn wrt_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect()
}

fn function<'a>(p: &'a DlProgram, name: &str) -> Result<&'a difflang::ast::FuncDef, Fail> {
    p.program.function(name).ok_or_else(|| (DlStatus::UnknownFunction, format!("no function named `{name}`")))
}

fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Fail> {
    let c = CString::new(s).map_err(fail(DlStatus::InvalidArgument))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse and validate DSL source.
///
/// # Safety
/// `src` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dl_program_parse(src: *const c_char, out: *mut *mut DlProgram) -> DlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let src = text(src, "src")?;
        let program = parse(src).map_err(fail(DlStatus::ParseError))?;
        let diags = validate(&program);
        if let Some(d) = diags.first() {
            return Err((DlStatus::InvalidProgram, d.to_string()));
        }
        *out = Box::into_raw(Box::new(DlProgram { program }));
        Ok(())
    })
}

/// Release a program. Null is ignored.
///
/// # Safety
/// `p` must come from [`dl_program_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_program_free(p: *mut DlProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Call `fname` at `point` (e.g. `"p=[1,2],dim=2"`).
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dl_eval(p: *const DlProgram, fname: *const c_char, point: *const c_char, out: *mut f64) -> DlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let p = handle(p, "program")?;
        let f = function(p, text(fname, "fname")?)?;
        let args = bind_point(f, text(point, "point")?).map_err(fail(DlStatus::PointError))?;
        let compiled = CompiledProgram::new(&p.program).map_err(fail(DlStatus::EvalError))?;
        *out = Interpreter::new(&compiled).call(&f.name, &args).map_err(fail(DlStatus::EvalError))?;
        Ok(())
    })
}

/// Source of the forward-mode derivative of `fname` with respect to `wrt`
/// (`"x"` or `"p[2]"`).
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dl_differentiate(p: *const DlProgram, fname: *const c_char, wrt: *const c_char, out: *mut *mut c_char) -> DlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let p = handle(p, "program")?;
        let f = function(p, text(fname, "fname")?)?;
        let wrt: Wrt = text(wrt, "wrt")?.parse().map_err(fail(DlStatus::InvalidArgument))?;
        let d = ad::differentiate(&DiffRequest::new(f.clone(), wrt).with_context(&p.program.functions)).map_err(fail(DlStatus::AdError))?;
        give_string(print_function(&d.derivative), out)
    })
}

/// Source of the reverse-mode gradient of `fname`. `wrt` is a
/// comma-separated parameter list; empty means every double and array
/// parameter.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dl_gradient_source(p: *const DlProgram, fname: *const c_char, wrt: *const c_char, out: *mut *mut c_char) -> DlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let p = handle(p, "program")?;
        let f = function(p, text(fname, "fname")?)?;
        let mut wrt = wrt_list(text(wrt, "wrt")?);
        if wrt.is_empty() {
            wrt = default_wrt(f);
        }
        let g = ad::gradient(&GradRequest::new(f.clone(), wrt).with_context(&p.program.functions)).map_err(fail(DlStatus::AdError))?;
        give_string(print_function(&g.gradient), out)
    })
}

fn default_wrt(f: &difflang::ast::FuncDef) -> Vec<String> {
    use difflang::ast::Type;
    f.params.iter().filter(|p| matches!(p.ty, Type::Double | Type::DoubleArray)).map(|p| p.name.clone()).collect()
}

/// Prepare `fname` for gradient evaluation with respect to `wrt`
/// (comma-separated; empty means every double and array parameter).
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dl_gradient_new(p: *const DlProgram, fname: *const c_char, wrt: *const c_char, out: *mut *mut DlGradient) -> DlStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let p = handle(p, "program")?;
        let f = function(p, text(fname, "fname")?)?;
        let mut wrt = wrt_list(text(wrt, "wrt")?);
        if wrt.is_empty() {
            wrt = default_wrt(f);
        }
        let engine = GradientEngine::new(&p.program, &f.name, &wrt).map_err(fail(DlStatus::AdError))?;
        *out = Box::into_raw(Box::new(DlGradient { engine }));
        Ok(())
    })
}

/// Release a gradient handle. Null is ignored.
///
/// # Safety
/// `g` must come from [`dl_gradient_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_gradient_free(g: *mut DlGradient) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Evaluate the gradient at `point` into `out[0..cap]`. `len` receives the
/// gradient length; if it exceeds `cap`, nothing is written and
/// `DL_STATUS_BUFFER_TOO_SMALL` is returned. `backend` is a [`DlBackend`]
/// value. `eps` is the central-difference step for the numeric backend and
/// is ignored otherwise.
///
/// # Safety
/// Pointers must be valid; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_gradient_eval(
    g: *const DlGradient,
    backend: i32,
    point: *const c_char,
    eps: f64,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> DlStatus {
    guard(|| {
        out_ptr(len, "len")?;
        let g = handle(g, "gradient")?;
        let args = bind_point(&g.engine.func, text(point, "point")?).map_err(fail(DlStatus::PointError))?;
        let backend = match backend {
            b if b == DlBackend::Forward as i32 => Backend::ForwardAd,
            b if b == DlBackend::Reverse as i32 => Backend::ReverseAd,
            b if b == DlBackend::Numeric as i32 => Backend::Numeric,
            b => return Err((DlStatus::InvalidArgument, format!("unknown backend {b}"))),
        };
        let cfg = if backend == Backend::Numeric { NumDiffConfig::new(eps).map_err(fail(DlStatus::InvalidArgument))? } else { NumDiffConfig::default() };
        let mut stats = Default::default();
        let grad = g.engine.gradient(backend, &args, &cfg, &mut stats).map_err(fail(DlStatus::EvalError))?;
        *len = grad.len();
        if grad.len() > cap {
            return Err((DlStatus::BufferTooSmall, format!("gradient has {} entries, buffer holds {cap}", grad.len())));
        }
        if !grad.is_empty() {
            out_ptr(out, "out")?;
            ptr::copy_nonoverlapping(grad.as_ptr(), out, grad.len());
        }
        Ok(())
    })
}
