use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use difflang_ffi::*;

const SUM: &str = "double sum(double* p, int dim) {
    double r = 0.0;
    for (int i = 0; i < dim; i++) {
        r += p[i];
    }
    return r;
}
double bw(double x, double gamma, double x0 = 0) {
    double h = gamma / 2.0;
    return h / (M_PI * ((x - x0) * (x - x0) + h * h));
}";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dl_last_error()) }.to_str().unwrap().to_string()
}

fn program() -> *mut DlProgram {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { dl_program_parse(c(SUM).as_ptr(), &mut p) }, DlStatus::Ok);
    p
}

#[test]
fn eval_and_gradients() {
    let p = program();
    let mut v = 0.0;
    let st = unsafe { dl_eval(p, c("sum").as_ptr(), c("p=[1,2,3.5],dim=3").as_ptr(), &mut v) };
    assert_eq!((st, v), (DlStatus::Ok, 6.5));

    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dl_gradient_new(p, c("sum").as_ptr(), c("p").as_ptr(), &mut g) }, DlStatus::Ok);
    for backend in [DlBackend::Forward, DlBackend::Reverse, DlBackend::Numeric] {
        let mut out = [0.0; 4];
        let mut len = 0;
        let st = unsafe { dl_gradient_eval(g, backend as i32, c("p=[1,2,3]").as_ptr(), 1e-6, out.as_mut_ptr(), 4, &mut len) };
        assert_eq!(st, DlStatus::Ok);
        assert_eq!(len, 3);
        for v in &out[..3] {
            assert!((v - 1.0).abs() < 1e-8, "{backend:?} {out:?}");
        }
    }
    let mut out = [0.0; 2];
    let mut len = 0;
    let st = unsafe { dl_gradient_eval(g, DlBackend::Reverse as i32, c("p=[1,2,3]").as_ptr(), 0.0, out.as_mut_ptr(), 2, &mut len) };
    assert_eq!((st, len, out), (DlStatus::BufferTooSmall, 3, [0.0, 0.0]));
    let st = unsafe { dl_gradient_eval(g, 7, c("p=[1]").as_ptr(), 0.0, out.as_mut_ptr(), 2, &mut len) };
    assert_eq!(st, DlStatus::InvalidArgument);
    unsafe {
        dl_gradient_free(g);
        dl_program_free(p);
    }
}

#[test]
fn breit_wigner_gamma_derivative_is_exact_zero() {
    let p = program();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dl_gradient_new(p, c("bw").as_ptr(), c("gamma").as_ptr(), &mut g) }, DlStatus::Ok);
    let mut out = [1.0];
    let mut len = 0;
    let st = unsafe { dl_gradient_eval(g, DlBackend::Reverse as i32, c("x=1,gamma=2").as_ptr(), 0.0, out.as_mut_ptr(), 1, &mut len) };
    assert_eq!((st, out[0].to_bits()), (DlStatus::Ok, 0));
    unsafe {
        dl_gradient_free(g);
        dl_program_free(p);
    }
}

#[test]
fn generated_sources() {
    let p = program();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { dl_gradient_source(p, c("sum").as_ptr(), c("").as_ptr(), &mut s) }, DlStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    assert!(text.starts_with("double sum_grad(double* p, int dim, double* _result)"), "{text}");
    unsafe { dl_string_free(s) };
    assert_eq!(unsafe { dl_differentiate(p, c("bw").as_ptr(), c("gamma").as_ptr(), &mut s) }, DlStatus::Ok);
    assert!(unsafe { CStr::from_ptr(s) }.to_str().unwrap().starts_with("double bw_dgamma("));
    unsafe {
        dl_string_free(s);
        dl_program_free(p);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { dl_program_parse(c("double f( {").as_ptr(), &mut p) }, DlStatus::ParseError);
    assert!(p.is_null());
    assert!(last_error().contains("syntax error"), "{}", last_error());
    assert_eq!(unsafe { dl_program_parse(ptr::null(), &mut p) }, DlStatus::NullArgument);

    let p = program();
    let mut v = 0.0;
    assert_eq!(unsafe { dl_eval(p, c("nope").as_ptr(), c("").as_ptr(), &mut v) }, DlStatus::UnknownFunction);
    assert_eq!(unsafe { dl_eval(p, c("sum").as_ptr(), c("p=[1").as_ptr(), &mut v) }, DlStatus::PointError);
    assert_eq!(unsafe { dl_eval(p, c("sum").as_ptr(), c("p=[1],dim=5").as_ptr(), &mut v) }, DlStatus::EvalError);
    assert!(last_error().contains("out of bounds"), "{}", last_error());
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dl_gradient_new(p, c("sum").as_ptr(), c("q").as_ptr(), &mut g) }, DlStatus::AdError);
    assert_eq!(unsafe { dl_eval(p, c("sum").as_ptr(), c("p=[1]").as_ptr(), &mut v) }, DlStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe {
        dl_program_free(p);
        dl_program_free(ptr::null_mut());
        dl_string_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/difflang.h");
    let src = std::env::temp_dir().join("difflang_header_check.c");
    std::fs::write(&src, format!("#include \"{header}\"\nint main(void) {{ DlProgram *p = 0; return (int)dl_program_parse(\"\", &p); }}\n")).unwrap();
    let Ok(out) = Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
