use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn difflang(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_difflang"))
        .args(args)
        .current_dir(root())
        .env("DIFFLANG_COLOR", "0")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn grad_at_point() {
    let o = difflang(&["grad", "-f", "models/sum.dl", "--fn", "sum", "--wrt", "p", "--backend", "ad", "--at", "p=[1,2,3],dim=3"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "[1, 1, 1]\n");
    let o = difflang(&["grad", "--fn", "sum", "--backend", "fd", "--at", "p=[1,2,3]", "--format", "json"], None);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["func_evals"], 6);
    assert_eq!(v["slots"][2], "p[2]");
}

#[test]
fn derivative_source_pipes_into_eval() {
    let d = difflang(&["differentiate", "-f", "models/breitwigner.dl", "--fn", "breitwigner_pdf", "--wrt", "gamma"], None);
    assert_eq!(d.status.code(), Some(0), "{}", stderr(&d));
    assert!(stdout(&d).starts_with("double breitwigner_pdf_dgamma(double x, double gamma, double x0 = 0.0)"));
    let e = difflang(&["eval", "-f", "-", "--at", "x=1,gamma=2"], Some(&stdout(&d)));
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    assert_eq!(stdout(&e), "0\n");
}

#[test]
fn gradient_source_runs_with_result_array() {
    let g = difflang(&["grad", "--fn", "mvn", "--wrt", "p"], None);
    assert_eq!(g.status.code(), Some(0));
    let e = difflang(&["eval", "-f", "-", "--arrays", "--at", "x=[0,0],p=[0,0],sigma=1,dim=2,_result=[0,0]"], Some(&stdout(&g)));
    assert_eq!(stdout(&e), "0\nx = [0, 0]\np = [0, 0]\n_result = [0, 0]\n", "{}", stderr(&e));
}

#[test]
fn bench_csv_has_one_row_per_dim_and_backend() {
    let o = difflang(&["bench", "--model", "sum", "--dims", "5,64,512", "--format", "csv"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "model,dim,backend,median_ns,scalar_ops,func_evals,max_abs_err,valid");
}

#[test]
fn untimed_reports_repeat_exactly() {
    let args = ["bench", "--model", "mvn", "--dims", "5,64", "--no-timing", "--format", "json"];
    let a = stdout(&difflang(&args, None));
    assert_eq!(a, stdout(&difflang(&args, None)));
    assert!(a.contains("\"median_ns\": null"));
    let acc = ["bench", "--model", "gaus", "--points", "3", "--seed", "9", "--no-timing", "--format", "csv"];
    let o = difflang(&acc, None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 3 * 3);
    assert_eq!(stdout(&o), stdout(&difflang(&acc, None)));
}

#[test]
fn check_compares_backends() {
    let o = difflang(&["check", "--fn", "mvn", "--points", "5"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("mvn: 5 points"));
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.dl");
    std::fs::write(&f, "double f(double* a, double b, int n) { double s = 0; for (int i = 0; i < n; i++) s += sin(a[i] * b); return s; }").unwrap();
    let o = difflang(&["check", "-f", f.to_str().unwrap(), "--dim", "3", "--range", "-2,2"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn fit_from_synthetic_and_saved_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.csv");
    let h = h.to_str().unwrap();
    let common = ["--model", "gaus", "--init", "0.5,0.5,1", "--format", "json"];
    let mut args = vec!["fit", "--synth", "1,1.5", "--range", "-5,7", "--seed", "3", "--write-hist", h];
    args.extend(common);
    let a = difflang(&args, None);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert!(std::fs::read_to_string(h).unwrap().starts_with("lo,hi,count\n"));
    let mut args = vec!["fit", "--hist", h, "--backend", "nd"];
    args.extend(common);
    let b = difflang(&args, None);
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let (a, b): (serde_json::Value, serde_json::Value) = (serde_json::from_str(&stdout(&a)).unwrap(), serde_json::from_str(&stdout(&b)).unwrap());
    for i in 0..3 {
        let (x, y) = (a["params"][i].as_f64().unwrap(), b["params"][i].as_f64().unwrap());
        assert!((x - y).abs() < 1e-4, "{x} vs {y}");
    }
    assert!((a["params"][2].as_f64().unwrap() - 1.5).abs() < 0.075);
    assert_eq!(a["names"][1], "mu");
}

#[test]
fn fit_reports_non_convergence() {
    let o = difflang(&["fit", "--model", "gaus", "--synth", "0,1", "--init", "1,0.5,2", "--max-iter", "3"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("3 iterations"));
    assert!(stderr(&o).contains("did not converge"));
}

#[test]
fn exit_codes() {
    let usage = [
        vec!["grad", "--bogus"],
        vec!["frobnicate"],
        vec!["grad", "--fn", "sum", "--backend", "fd"],
        vec!["grad", "--fn", "sum", "--backend", "sideways"],
        vec!["bench", "--model", "sum", "--reps", "2"],
        vec!["fit", "--model", "gaus", "--init", "1,0,1"],
    ];
    for args in usage {
        let o = difflang(&args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let domain = [
        vec!["grad", "-f", "missing.dl", "--fn", "f"],
        vec!["eval", "--fn", "nosuchmodel"],
        vec!["eval", "--fn", "mvn", "--at", "x=[1],p=[1],sigma=-1"],
        vec!["grad", "--fn", "sum", "--wrt", "q"],
        vec!["grad", "--fn", "sum", "--at", "p=[1,2"],
    ];
    for args in domain {
        let o = difflang(&args, None);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
    }
    assert_eq!(difflang(&["--help"], None).status.code(), Some(0));
}

#[test]
fn parse_errors_name_the_location() {
    let o = difflang(&["eval", "-f", "-"], Some("double f() {\n  return 1 +;\n}\n"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("<stdin>:2:"), "{}", stderr(&o));
}

#[test]
fn color_follows_environment() {
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_difflang")).args(["eval", "--fn", "nope"]).env("DIFFLANG_COLOR", v).output().unwrap()
    };
    assert!(stderr(&run("1")).contains("\x1b[1;31m"));
    assert!(!stderr(&run("0")).contains('\x1b'));
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.dl");
    let o = difflang(&["grad", "--fn", "sum", "-o", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    assert!(std::fs::read_to_string(out).unwrap().starts_with("double sum_grad("));
}
