//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, IsTerminal, Read};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use difflang::ad::{self, DiffRequest, GradRequest, Wrt};
use difflang::ast::{FuncDef, Type};
use difflang::bench::{run_accuracy, run_scaling, BenchOptions, BenchReport, MAX_DIM, MIN_REPS};
use difflang::engine::{Backend, GradientEngine};
use difflang::fitting::{fit, synthesize_histogram, FitModel, FitOptions, FitProblem, Gaussian, Histogram};
use difflang::models::get_model;
use difflang::numdiff::NumDiffConfig;
use difflang::point::bind_point;
use difflang::printer::print_function;
use difflang::{parse, validate, CompiledProgram, EvalStats, Interpreter, Program, Value};

#[derive(Debug, Parser)]
#[command(name = "difflang", version, about = "Source-transformation automatic differentiation for a small C-like language")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write results to this file instead of standard output.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the forward-mode derivative of a function with respect to one input.
    Differentiate(DiffArgs),
    /// Print the reverse-mode gradient function, or evaluate a gradient with --at.
    Grad(GradArgs),
    /// Run a function at a point.
    Eval(EvalArgs),
    /// Compare reverse-mode gradients with central differences at random points.
    Check(CheckArgs),
    /// Time and validate gradient backends on a built-in model.
    Bench(BenchArgs),
    /// Fit a model to a histogram by gradient descent.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
struct Source {
    /// DSL source file, `-` for standard input. Without it, --fn names a built-in model.
    #[arg(short = 'f', long = "file")]
    file: Option<PathBuf>,
    /// Function to work on. Defaults to the last function in the file.
    #[arg(long = "fn")]
    func: Option<String>,
}

#[derive(Debug, Args)]
struct DiffArgs {
    #[command(flatten)]
    source: Source,
    /// Parameter to differentiate by: `x`, or `p[2]` for an array element.
    #[arg(long)]
    wrt: String,
}

#[derive(Debug, Args)]
struct GradArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated parameters; all double and array parameters if omitted.
    #[arg(long, value_delimiter = ',')]
    wrt: Vec<String>,
    /// ad (reverse mode), fwd-ad, or fd (central differences).
    #[arg(long, default_value = "ad")]
    backend: Backend,
    /// Point to evaluate at, e.g. "p=[1,2,3],dim=3".
    #[arg(long)]
    at: Option<String>,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    source: Source,
    /// Point to run at, e.g. "x=1,gamma=2". Omitted parameters take their defaults.
    #[arg(long, default_value = "")]
    at: String,
    /// Also print array arguments after the call.
    #[arg(long)]
    arrays: bool,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated parameters; all double and array parameters if omitted.
    #[arg(long, value_delimiter = ',')]
    wrt: Vec<String>,
    /// Number of random points.
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Seed for the point generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Allowed |ad - fd| relative to 1 + |fd|.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Array length for functions read from a file.
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Sampling interval for doubles and array elements of functions read from a file.
    #[arg(long, value_delimiter = ',', default_values_t = [-1.0, 1.0], allow_hyphen_values = true)]
    range: Vec<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Built-in model: sum, mvn, gaus, expo or breitwigner_pdf.
    #[arg(long)]
    model: String,
    /// Comma-separated array lengths, ascending.
    #[arg(long, value_delimiter = ',', default_values_t = [5, 64, 512, 4096])]
    dims: Vec<usize>,
    /// Comma-separated backends: fwd-ad, rev-ad, nd.
    #[arg(long, value_delimiter = ',', default_values_t = [Backend::ReverseAd, Backend::Numeric])]
    backends: Vec<Backend>,
    /// Timed repetitions per row; at least 5.
    #[arg(long, default_value_t = MIN_REPS)]
    reps: usize,
    /// Skip timing; the report is then identical across runs.
    #[arg(long)]
    no_timing: bool,
    /// Compare every backend against the closed form at random points instead.
    #[arg(long)]
    accuracy: bool,
    /// Random points for --accuracy.
    #[arg(long, default_value_t = 10)]
    points: usize,
    /// Seed for --accuracy points.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Raise the dimension limit.
    #[arg(long, default_value_t = MAX_DIM)]
    max_dim: usize,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Built-in model (gaus, expo, breitwigner_pdf) or `mixK` for K Gaussians.
    #[arg(long)]
    model: String,
    /// Histogram CSV with header lo,hi,count.
    #[arg(long, conflicts_with = "synth")]
    hist: Option<PathBuf>,
    /// Sample a histogram from N(mu, sigma) instead: "mu,sigma".
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    synth: Option<Vec<f64>>,
    /// Samples drawn for --synth.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Bins for --synth.
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Histogram range for --synth: lo,hi.
    #[arg(long, value_delimiter = ',', default_values_t = [-5.0, 5.0], allow_hyphen_values = true)]
    range: Vec<f64>,
    /// Seed for --synth.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Save the sampled histogram as CSV.
    #[arg(long, requires = "synth")]
    write_hist: Option<PathBuf>,
    /// Comma-separated starting parameters.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    init: Vec<f64>,
    /// ad or nd.
    #[arg(long, default_value = "ad")]
    backend: Backend,
    /// Stop when the gradient norm falls below this.
    #[arg(long, default_value_t = 1e-8)]
    gtol: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Central-difference step for --backend nd.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

/// Failure with its exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or flag combinations: exit 2.
    Usage(String),
    /// Invalid input, evaluation or convergence failure: exit 1. Carries
    /// any output produced before the failure.
    Domain(String, Option<String>),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(..) => 1,
        }
    }
}

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Domain(e.to_string(), None)
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn color_enabled() -> bool {
    match std::env::var("DIFFLANG_COLOR").as_deref() {
        Ok("1") => true,
        Ok("0") => false,
        _ => io::stderr().is_terminal(),
    }
}

pub fn report_error(msg: &str) {
    if color_enabled() {
        eprintln!("\x1b[1;31merror:\x1b[0m {msg}");
    } else {
        eprintln!("error: {msg}");
    }
}

/// Parse arguments, run, print. Returns the exit status.
pub fn main_with(args: impl IntoIterator<Item = std::ffi::OsString>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let output = cli.output.clone();
    let (text, failure) = match run(cli) {
        Ok(t) => (Some(t), None),
        Err(Failure::Domain(m, partial)) => (partial, Some(Failure::Domain(m, None))),
        Err(f) => (None, Some(f)),
    };
    if let Some(t) = text {
        let written = match &output {
            Some(path) => fs::write(path, &t).map_err(|e| format!("cannot write {}: {e}", path.display())),
            None => {
                print!("{t}");
                Ok(())
            }
        };
        if let Err(e) = written {
            report_error(&e);
            return 1;
        }
    }
    match failure {
        None => 0,
        Some(f) => {
            match &f {
                Failure::Usage(m) => {
                    report_error(m);
                    eprintln!("\nFor more information, try '--help'.");
                }
                Failure::Domain(m, _) => report_error(m),
            }
            f.code()
        }
    }
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Differentiate(a) => differentiate(a),
        Command::Grad(a) => grad(a),
        Command::Eval(a) => eval(a),
        Command::Check(a) => check(a),
        Command::Bench(a) => bench(a),
        Command::Fit(a) => fit_cmd(a),
    }
}

struct Loaded {
    program: Program,
    func: FuncDef,
    /// Name shown in messages.
    origin: String,
}

fn load(src: &Source) -> Result<Loaded, Failure> {
    let (text, origin) = match &src.file {
        Some(p) if p.as_os_str() == "-" => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(|e| domain(format!("cannot read standard input: {e}")))?;
            (s, "<stdin>".to_string())
        }
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| domain(format!("cannot read {}: {e}", p.display())))?;
            (s, p.display().to_string())
        }
        None => {
            let name = src.func.as_deref().ok_or_else(|| usage("give a source file with -f, or a built-in model with --fn"))?;
            let m = get_model(name).map_err(domain)?;
            (m.source.to_string(), format!("models/{}", m.file))
        }
    };
    let program = parse(&text).map_err(|e| domain(e.render(&origin)))?;
    let diags = validate(&program);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| format!("{origin}: {d}")).collect();
        return Err(domain(lines.join("\n")));
    }
    let func = match &src.func {
        Some(n) => program.function(n).ok_or_else(|| domain(format!("{origin} has no function `{n}`")))?,
        None => program.functions.last().ok_or_else(|| domain(format!("{origin} defines no functions")))?,
    }
    .clone();
    Ok(Loaded { program, func, origin })
}

fn wrt_list(func: &FuncDef, wrt: &[String]) -> Vec<String> {
    if wrt.is_empty() {
        func.params.iter().filter(|p| matches!(p.ty, Type::Double | Type::DoubleArray)).map(|p| p.name.clone()).collect()
    } else {
        wrt.to_vec()
    }
}

fn fmt_list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(domain)
}

fn numdiff(eps: f64) -> Result<NumDiffConfig, Failure> {
    NumDiffConfig::new(eps).map_err(|e| usage(e.to_string()))
}

fn differentiate(a: DiffArgs) -> Result<String, Failure> {
    let l = load(&a.source)?;
    let wrt: Wrt = a.wrt.parse().map_err(|e| usage(format!("--wrt: {e}")))?;
    let req = DiffRequest::new(l.func, wrt).with_context(&l.program.functions);
    let d = ad::differentiate(&req).map_err(domain)?;
    Ok(print_function(&d.derivative))
}

fn grad(a: GradArgs) -> Result<String, Failure> {
    let l = load(&a.source)?;
    let wrt = wrt_list(&l.func, &a.wrt);
    let Some(at) = &a.at else {
        if a.backend != Backend::ReverseAd {
            return Err(usage(format!("--backend {} needs a point (--at)", a.backend)));
        }
        let req = GradRequest::new(l.func, wrt).with_context(&l.program.functions);
        return Ok(print_function(&ad::gradient(&req).map_err(domain)?.gradient));
    };
    let args = bind_point(&l.func, at).map_err(domain)?;
    let engine = GradientEngine::new(&l.program, &l.func.name, &wrt).map_err(domain)?;
    let report = engine.report(a.backend, &args, &numdiff(a.eps)?).map_err(domain)?;
    match a.format {
        Format::Text => Ok(fmt_list(&report.gradient) + "\n"),
        Format::Json => json(&report),
        Format::Csv => {
            let mut out = String::from("slot,value\n");
            for (s, v) in report.slots.iter().zip(&report.gradient) {
                let _ = writeln!(out, "{s},{v}");
            }
            Ok(out)
        }
    }
}

#[derive(Serialize)]
struct EvalOut {
    function: String,
    value: f64,
    arrays: Vec<(String, Vec<f64>)>,
    scalar_ops: u64,
}

fn eval(a: EvalArgs) -> Result<String, Failure> {
    let l = load(&a.source)?;
    let args = bind_point(&l.func, &a.at).map_err(domain)?;
    let compiled = CompiledProgram::new(&l.program).map_err(domain)?;
    let mut it = Interpreter::new(&compiled);
    let value = it.call(&l.func.name, &args).map_err(|e| domain(format!("{}: {e}", l.origin)))?;
    let arrays: Vec<(String, Vec<f64>)> = l
        .func
        .params
        .iter()
        .zip(&args)
        .filter_map(|(p, v)| if let Value::Arr(a) = v { Some((p.name.clone(), a.to_vec())) } else { None })
        .collect();
    match a.format {
        Format::Json => json(&EvalOut { function: l.func.name, value, arrays, scalar_ops: it.stats.scalar_ops }),
        Format::Csv => Err(usage("eval supports --format text or json")),
        Format::Text => {
            let mut out = format!("{value}\n");
            if a.arrays {
                for (n, v) in arrays {
                    let _ = writeln!(out, "{n} = {}", fmt_list(&v));
                }
            }
            Ok(out)
        }
    }
}

fn random_point(l: &Loaded, a: &CheckArgs, rng: &mut ChaCha8Rng) -> Vec<Value> {
    if a.source.file.is_none() {
        if let Ok(m) = get_model(&l.func.name) {
            return m.sample_point(rng);
        }
    }
    let (lo, hi) = (a.range[0], a.range[1]);
    l.func
        .params
        .iter()
        .map(|p| match p.ty {
            Type::Int => Value::I(a.dim as i64),
            Type::DoubleArray => Value::array(&(0..a.dim).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>()),
            _ => Value::D(rng.random_range(lo..hi)),
        })
        .collect()
}

fn pair(v: &[f64], flag: &str) -> Result<(f64, f64), Failure> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(usage(format!("{flag} takes two comma-separated numbers"))),
    }
}

#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
fn check(a: CheckArgs) -> Result<String, Failure> {
    pair(&a.range, "--range")?;
    if !(a.range[0] < a.range[1]) {
        return Err(usage("--range needs lo < hi"));
    }
    let l = load(&a.source)?;
    let wrt = wrt_list(&l.func, &a.wrt);
    let engine = GradientEngine::new(&l.program, &l.func.name, &wrt).map_err(domain)?;
    let cfg = numdiff(a.eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst: f64 = 0.0;
    let mut out = String::new();
    let mut failures = 0;
    for k in 0..a.points {
        let point = random_point(&l, &a, &mut rng);
        let mut stats = EvalStats::default();
        let at = |e| domain(format!("point {k}: {e}"));
        let ad = engine.reverse(&point, &mut stats).map_err(at)?;
        let fd = engine.numeric(&point, &cfg, &mut stats).map_err(at)?;
        let slots = engine.slots(&point).map_err(domain)?;
        for ((s, x), y) in slots.into_iter().zip(&ad).zip(&fd) {
            let rel = (x - y).abs() / (1.0 + y.abs());
            worst = worst.max(rel);
            if rel > a.tol {
                failures += 1;
                let _ = writeln!(out, "point {k} {}: ad {x} fd {y}", engine.slot_label(s));
            }
        }
    }
    let _ = writeln!(out, "{}: {} points, max relative discrepancy {worst:.3e} (tolerance {:e})", l.func.name, a.points, a.tol);
    if failures > 0 {
        return Err(Failure::Domain(format!("{failures} gradient component(s) disagree"), Some(out)));
    }
    Ok(out)
}

fn render_report(r: &BenchReport, format: Format) -> Result<String, Failure> {
    match format {
        Format::Json => Ok(r.to_json().map_err(domain)? + "\n"),
        Format::Csv => r.to_csv().map_err(domain),
        Format::Text => {
            let mut out = format!(
                "{} {} ({} cpus, {} build), median of {} runs\n",
                r.environment.os, r.environment.arch, r.environment.logical_cpus, r.environment.profile, r.repetitions
            );
            let _ = writeln!(out, "{:<16} {:>6} {:>7} {:>14} {:>12} {:>10} {:>12}", "model", "dim", "backend", "median_ns", "scalar_ops", "func_evals", "max_abs_err");
            for row in &r.rows {
                let t = row.median_ns.map_or("-".to_string(), |v| v.to_string());
                let flag = if row.valid { "" } else { "  INVALID" };
                let _ = writeln!(
                    out,
                    "{:<16} {:>6} {:>7} {:>14} {:>12} {:>10} {:>12.3e}{flag}",
                    row.model, row.dim, row.backend, t, row.scalar_ops, row.func_evals, row.max_abs_err
                );
            }
            Ok(out)
        }
    }
}

fn bench(a: BenchArgs) -> Result<String, Failure> {
    let m = get_model(&a.model).map_err(domain)?;
    let opts = BenchOptions {
        reps: a.reps,
        timing: !a.no_timing,
        numdiff: numdiff(a.eps)?,
        max_dim: a.max_dim,
        wrt: None,
    };
    if a.reps < MIN_REPS {
        return Err(usage(format!("--reps must be at least {MIN_REPS}")));
    }
    let report = if a.accuracy || m.dims.is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let points: Vec<Vec<Value>> = (0..a.points).map(|_| m.sample_point(&mut rng)).collect();
        run_accuracy(m.name, &points, &opts)
    } else {
        if a.dims.iter().any(|d| *d > a.max_dim) {
            return Err(usage(format!("dims above {} need --max-dim", a.max_dim)));
        }
        run_scaling(m.name, &a.dims, &a.backends, &opts)
    }
    .map_err(domain)?;
    let out = render_report(&report, a.format)?;
    if !report.all_valid() {
        return Err(Failure::Domain("some gradients failed validation against the closed form".into(), Some(out)));
    }
    Ok(out)
}

#[derive(Serialize)]
struct FitOut<'a> {
    model: &'a str,
    names: Vec<String>,
    #[serde(flatten)]
    result: &'a difflang::fitting::FitResult,
}

fn fit_cmd(a: FitArgs) -> Result<String, Failure> {
    let model = match a.model.strip_prefix("mix").map(str::parse::<usize>) {
        Some(Ok(k)) if k > 0 => FitModel::mixture(k),
        _ => FitModel::builtin(&a.model).map_err(domain)?,
    };
    let histogram = match (&a.hist, &a.synth) {
        (Some(p), _) => {
            let f = fs::File::open(p).map_err(|e| domain(format!("cannot read {}: {e}", p.display())))?;
            Histogram::from_csv(f).map_err(domain)?
        }
        (None, Some(s)) => {
            let (mu, sigma) = pair(s, "--synth")?;
            let h = synthesize_histogram(&[Gaussian::new(mu, sigma)], a.samples, a.bins, pair(&a.range, "--range")?, a.seed).map_err(domain)?;
            if let Some(p) = &a.write_hist {
                let f = fs::File::create(p).map_err(|e| domain(format!("cannot write {}: {e}", p.display())))?;
                h.to_csv(f).map_err(domain)?;
            }
            h
        }
        (None, None) => return Err(usage("give --hist FILE or --synth MU,SIGMA")),
    };
    if !matches!(a.backend, Backend::ReverseAd | Backend::Numeric) {
        return Err(usage("fit supports --backend ad or nd"));
    }
    let names = model.param_names();
    let problem = FitProblem { model, histogram, init: a.init };
    let opts = FitOptions { gtol: a.gtol, max_iter: a.max_iter, numdiff: numdiff(a.eps)?, ..FitOptions::default() };
    let r = fit(&problem, a.backend, &opts).map_err(domain)?;
    let out = match a.format {
        Format::Json => json(&FitOut { model: &problem.model.name, names, result: &r })?,
        Format::Csv => return Err(usage("fit supports --format text or json")),
        Format::Text => {
            let mut out = String::new();
            for (n, v) in names.iter().zip(&r.params) {
                let _ = writeln!(out, "{n} = {v}");
            }
            let _ = writeln!(out, "objective = {:e}", r.objective);
            let _ = writeln!(
                out,
                "{} iterations, {} gradients, {} function evaluations in gradients, {} line-search evaluations, |g| = {:.3e}, {:?}",
                r.iterations, r.grad_evals, r.func_evals, r.objective_evals, r.gradient_norm, r.stop
            );
            out
        }
    };
    if !r.converged {
        return Err(Failure::Domain(format!("fit did not converge ({:?}); best point printed", r.stop), Some(out)));
    }
    Ok(out)
}
