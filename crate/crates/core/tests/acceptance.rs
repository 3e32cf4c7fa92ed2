//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.
// Negated float comparisons are used so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use difflang::ad::{self, GradRequest, Wrt};
use difflang::ast::{walk_body, Callee, Expr, ExprKind, Stmt, TapeOp, Type};
use difflang::bench::{run_scaling, BenchOptions};
use difflang::engine::{Backend, GradientEngine};
use difflang::fitting::{fit, synthesize_histogram, FitModel, FitOptions, FitProblem, Gaussian};
use difflang::models::{all_models, get_model, reference_gradient};
use difflang::numdiff::{fd_gradient, layout_slots, NumDiffConfig};
use difflang::{parse, print, CompiledProgram, EvalError, EvalStats, Interpreter, Program, Value};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Additive slack in the operation-count bounds, covering the fixed cost of
/// seeding and returning.
const COST_C: u64 = 8;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn engine_for(model: &str, wrt: &[&str]) -> Result<GradientEngine, String> {
    let m = get_model(model).map_err(err)?;
    let wrt: Vec<String> = wrt.iter().map(|s| s.to_string()).collect();
    GradientEngine::new(&m.program(), m.name, &wrt).map_err(err)
}

fn breit_wigner_exactness() -> Outcome {
    let e = engine_for("breitwigner_pdf", &["gamma"])?;
    let at = [Value::D(1.0), Value::D(2.0), Value::D(0.0)];
    let mut s = EvalStats::default();
    let fwd = e.forward_partial(&Wrt::Param("gamma".into()), &at, &mut s).map_err(err)?;
    let rev = e.reverse(&at, &mut s).map_err(err)?[0];
    let nd = e.numeric(&at, &NumDiffConfig::new(1e-8).map_err(err)?, &mut s).map_err(err)?[0];
    ensure!(fwd.to_bits() == 0.0f64.to_bits(), "forward derivative {fwd:e} is not +0.0");
    ensure!(rev.to_bits() == 0.0f64.to_bits(), "reverse derivative {rev:e} is not +0.0");
    ensure!(nd != 0.0 && nd.abs() <= 1e-10, "fwd-AD {fwd:e}, rev-AD {rev:e} exact; ND = {nd:e}, expected nonzero with |ND| <= 1e-10");
    Ok(format!("fwd-AD {fwd:e}, rev-AD {rev:e}, ND {nd:e}"))
}

fn gradient_correctness() -> Outcome {
    let fd = NumDiffConfig::new(1e-6).map_err(err)?;
    let mut worst_ad: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for m in all_models() {
        let e = engine_for(m.name, m.wrt)?;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for k in 0..100 {
            let point = m.sample_point(&mut rng);
            let reference = reference_gradient(m.name, &point).map_err(err)?;
            let mut s = EvalStats::default();
            let rev = e.reverse(&point, &mut s).map_err(err)?;
            let fwd = e.forward(&point, &mut s).map_err(err)?;
            let num = e.numeric(&point, &fd, &mut s).map_err(err)?;
            ensure!(rev.len() == reference.len() && fwd.len() == reference.len(), "{} point {k}: length mismatch", m.name);
            for (i, r) in reference.iter().enumerate() {
                let rel = |v: f64| (v - r).abs() / (1.0 + r.abs());
                worst_ad = worst_ad.max(rel(rev[i])).max(rel(fwd[i]));
                worst_fd = worst_fd.max(rel(num[i]));
                ensure!(close(rev[i], *r, 1e-12), "{} point {k} slot {i}: rev-AD {} vs reference {r}", m.name, rev[i]);
                ensure!(close(fwd[i], *r, 1e-12), "{} point {k} slot {i}: fwd-AD {} vs reference {r}", m.name, fwd[i]);
                ensure!(close(num[i], *r, 1e-5), "{} point {k} slot {i}: FD {} vs reference {r}", m.name, num[i]);
            }
        }
    }
    Ok(format!("5 models x 100 points; worst relative error AD {worst_ad:.1e}, FD {worst_fd:.1e}"))
}

fn evaluation_count_law() -> Outcome {
    let cfg = NumDiffConfig::default();
    for (model, wrt) in [("sum", ["p"]), ("mvn", ["p"])] {
        let e = engine_for(model, &wrt)?;
        for dim in [5usize, 64, 512] {
            let point = get_model(model).map_err(err)?.bench_point(dim);
            let mut s = EvalStats::default();
            e.reverse(&point, &mut s).map_err(err)?;
            ensure!(s.func_evals == 1, "{model} dim {dim}: rev-AD made {} evaluations", s.func_evals);
            let mut s = EvalStats::default();
            e.numeric(&point, &cfg, &mut s).map_err(err)?;
            ensure!(s.func_evals == 2 * dim as u64, "{model} dim {dim}: ND made {} evaluations", s.func_evals);
        }
    }
    Ok("rev-AD 1 evaluation, ND 2*dim, for sum and mvn at dim 5, 64, 512".into())
}

fn cost_bounds() -> Outcome {
    let mut worst_r = i64::MIN;
    let mut worst_f = i64::MIN;
    for m in all_models() {
        let e = engine_for(m.name, m.wrt)?;
        let dims: &[usize] = if m.dims.is_some() { &[5, 512, 4096] } else { &[0] };
        for &dim in dims {
            let point = m.bench_point(dim);
            let mut s = EvalStats::default();
            e.value(&point, &mut s).map_err(err)?;
            let orig = s.scalar_ops;
            let mut s = EvalStats::default();
            e.reverse(&point, &mut s).map_err(err)?;
            ensure!(s.scalar_ops <= 4 * orig + COST_C, "{} dim {dim}: reverse {} ops vs original {orig}", m.name, s.scalar_ops);
            worst_r = worst_r.max(s.scalar_ops as i64 - 4 * orig as i64);
            // Array slots: first, middle and last element; every scalar.
            let f = m.function();
            let mut wrts = Vec::new();
            for p in f.params.iter().filter(|p| m.wrt.contains(&p.name.as_str())) {
                match p.ty {
                    Type::DoubleArray => {
                        for k in [0, dim / 2, dim - 1] {
                            wrts.push(Wrt::Slot(p.name.clone(), k));
                        }
                    }
                    _ => wrts.push(Wrt::Param(p.name.clone())),
                }
            }
            for w in wrts {
                let mut s = EvalStats::default();
                e.forward_partial(&w, &point, &mut s).map_err(err)?;
                ensure!(s.scalar_ops <= 3 * orig + COST_C, "{} dim {dim} wrt {w}: forward {} ops vs original {orig}", m.name, s.scalar_ops);
                worst_f = worst_f.max(s.scalar_ops as i64 - 3 * orig as i64);
            }
        }
    }
    Ok(format!("C = {COST_C}; largest excess reverse {worst_r}, forward {worst_f}"))
}

fn speedups(model: &str) -> Result<Vec<(usize, f64)>, String> {
    let dims = [5, 64, 512, 4096];
    let r = run_scaling(model, &dims, &[Backend::ReverseAd, Backend::Numeric], &BenchOptions::default()).map_err(err)?;
    ensure!(r.all_valid(), "{model}: a timed gradient failed validation");
    dims.iter()
        .map(|&d| r.speedup(model, d, Backend::Numeric, Backend::ReverseAd).map(|s| (d, s)).ok_or(format!("missing row {d}")))
        .collect()
}

fn describe(s: &[(usize, f64)]) -> String {
    s.iter().map(|(d, v)| format!("{d}:{v:.1}")).collect::<Vec<_>>().join(" ")
}

fn sum_speedup() -> Outcome {
    let s = speedups("sum")?;
    ensure!(s.windows(2).all(|w| w[0].1 < w[1].1), "speedup not increasing: {}", describe(&s));
    let (d, v) = s[3];
    ensure!(v >= d as f64 / 16.0, "speedup {v:.1} at dim {d} below dim/16 = {}", d / 16);
    Ok(format!("t_ND/t_rev-AD {}", describe(&s)))
}

fn mvn_speedup() -> Outcome {
    let s = speedups("mvn")?;
    ensure!(s.windows(2).all(|w| w[0].1 < w[1].1), "speedup not increasing: {}", describe(&s));
    let (d, v) = s[3];
    Ok(format!("t_ND/t_rev-AD {}; dim/speedup at {d} = {:.1}", describe(&s), d as f64 / v))
}

fn gaus_fit() -> Outcome {
    let (mu, sigma) = (1.0, 1.5);
    let hist = synthesize_histogram(&[Gaussian::new(mu, sigma)], 100_000, 100, (-5.0, 7.0), 42).map_err(err)?;
    let problem = FitProblem { model: FitModel::builtin("gaus").map_err(err)?, histogram: hist, init: vec![1.0, 0.0, 1.0] };
    let opts = FitOptions::default();
    let ad = fit(&problem, Backend::ReverseAd, &opts).map_err(err)?;
    let nd = fit(&problem, Backend::Numeric, &opts).map_err(err)?;
    for (name, r) in [("AD", &ad), ("ND", &nd)] {
        ensure!(r.converged, "{name} stopped without converging: {:?}", r.stop);
        ensure!((r.params[1] - mu).abs() <= 0.05 * mu, "{name} mu = {}", r.params[1]);
        ensure!((r.params[2] - sigma).abs() <= 0.05 * sigma, "{name} sigma = {}", r.params[2]);
        ensure!(r.grad_evals == r.iterations, "{name}: {} gradients in {} iterations", r.grad_evals, r.iterations);
    }
    for (a, n) in ad.params.iter().zip(&nd.params) {
        ensure!((a - n).abs() <= 1e-4, "AD {:?} vs ND {:?}", ad.params, nd.params);
    }
    ensure!(ad.func_evals == ad.iterations as u64, "AD: {} evaluations over {} gradients", ad.func_evals, ad.iterations);
    ensure!(nd.func_evals == 6 * nd.iterations as u64, "ND: {} evaluations over {} gradients", nd.func_evals, nd.iterations);
    Ok(format!(
        "AD mu {:.4} sigma {:.4} in {} iterations; ND mu {:.4} sigma {:.4} in {} iterations",
        ad.params[1], ad.params[2], ad.iterations, nd.params[1], nd.params[2], nd.iterations
    ))
}

fn golden_sum() -> Outcome {
    let m = get_model("sum").map_err(err)?;
    let g = ad::gradient(&GradRequest::new(m.function(), ["p"])).map_err(err)?.gradient;
    let golden = parse(include_str!("golden/sum_grad.dl")).map_err(err)?;
    ensure!(golden.functions.len() == 1 && golden.functions[0] == g, "generated gradient differs from golden:\n{}", print(&Program { functions: vec![g] }));
    let (mut tapes, mut counters, mut loops, mut replays) = (0, 0, 0, 0);
    walk_body(&g.body, &mut |s| match s {
        Stmt::Decl { ty: Type::IntTape, .. } => tapes += 1,
        Stmt::Decl { ty: Type::DoubleTape, .. } => tapes += 100,
        Stmt::Decl { name, ty: Type::Int, .. } if name.starts_with("_t") => counters += 1,
        Stmt::For { .. } => loops += 1,
        Stmt::Replay { body, .. } => {
            replays += 1;
            let pops = matches!(
                body.first(),
                Some(Stmt::Decl { init: Some(Expr { kind: ExprKind::Call { callee: Callee::Tape(TapeOp::Pop), .. }, .. }), .. })
            );
            if !pops {
                replays += 100;
            }
        }
        _ => {}
    });
    ensure!((tapes, counters, loops, replays) == (1, 1, 1, 1), "tapes {tapes}, counters {counters}, loops {loops}, replays {replays}");
    let program = Program { functions: vec![m.function(), g] };
    let compiled = CompiledProgram::new(&program).map_err(err)?;
    let out = Value::array(&[0.0; 5]);
    Interpreter::new(&compiled).call("sum_grad", &[Value::array(&[3.0, -1.0, 0.5, 2.0, 7.0]), Value::I(5), out.clone()]).map_err(err)?;
    let Value::Arr(a) = out else { unreachable!() };
    ensure!(a.to_vec() == vec![1.0; 5], "gradient {:?}", a.to_vec());
    Ok("one int tape, one trip counter, forward loop, pop-driven reverse loop; gradient all ones".into())
}

fn runner() -> TestRunner {
    TestRunner::new_with_rng(Config { cases: 64, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn corpus_round_trip() -> Result<(), String> {
    for m in all_models() {
        let p = m.program();
        let text = print(&p);
        ensure!(parse(&text).map_err(err)? == p, "{} does not round-trip", m.file);
        let f = m.function();
        let g = ad::gradient(&GradRequest::new(f.clone(), m.wrt.iter().copied())).map_err(err)?.gradient;
        let mut gen = vec![g];
        for w in m.wrt {
            let w = if f.params.iter().any(|p| p.name == *w && p.ty == Type::DoubleArray) { Wrt::Slot(w.to_string(), 1) } else { Wrt::Param(w.to_string()) };
            gen.push(ad::differentiate(&ad::DiffRequest::new(f.clone(), w)).map_err(err)?.derivative);
        }
        let gp = Program { functions: gen };
        ensure!(parse(&print(&gp)).map_err(err)? == gp, "derivatives of {} do not round-trip", m.name);
    }
    Ok(())
}

fn tape_lifo() -> Result<(), String> {
    let src = "double rev(double* v, int n) {
        tape<double> t;
        for (int i = 0; i < n; i++) {
            push(t, v[i]);
        }
        for (int j = 0; j < n; j++) {
            v[j] = pop(t);
        }
        return 0;
    }
    double under() {
        tape<int> t;
        push(t, 1);
        int a = pop(t);
        return pop(t) + a;
    }";
    let compiled = CompiledProgram::new(&parse(src).map_err(err)?).map_err(err)?;
    let r = Interpreter::new(&compiled).call("under", &[]);
    ensure!(r == Err(EvalError::PopOnEmpty), "pop on empty tape gave {r:?}");
    runner()
        .run(&prop::collection::vec(-1e6f64..1e6, 0..40), |v| {
            let arr = Value::array(&v);
            Interpreter::new(&compiled).call("rev", &[arr.clone(), Value::I(v.len() as i64)]).unwrap();
            let Value::Arr(a) = arr else { unreachable!() };
            let mut expect = v.clone();
            expect.reverse();
            prop_assert_eq!(a.to_vec(), expect);
            Ok(())
        })
        .map_err(err)
}

fn accumulation_doubles() -> Result<(), String> {
    let m = get_model("mvn").map_err(err)?;
    let g = ad::gradient(&GradRequest::new(m.function(), ["p", "sigma"])).map_err(err)?;
    let compiled = CompiledProgram::new(&Program { functions: vec![m.function(), g.gradient.clone()] }).map_err(err)?;
    runner()
        .run(&(prop::collection::vec(-1.5f64..1.5, 1..8), 0.5f64..2.0), |(p, sigma)| {
            let x: Vec<f64> = p.iter().map(|v| v * 0.5).collect();
            let args = vec![Value::array(&x), Value::array(&p), Value::D(sigma), Value::I(p.len() as i64)];
            let out = difflang::Array::zeros(g.result_len(&args).unwrap());
            let mut all = args.clone();
            all.push(Value::Arr(out.clone()));
            let mut it = Interpreter::new(&compiled);
            it.call("mvn_grad", &all).unwrap();
            let once = out.to_vec();
            it.call("mvn_grad", &all).unwrap();
            for (a, b) in out.to_vec().iter().zip(&once) {
                prop_assert!((a - 2.0 * b).abs() <= 1e-14 * (1.0 + b.abs()), "{} vs 2 * {}", a, b);
            }
            Ok(())
        })
        .map_err(err)
}

fn fd_restores_inputs() -> Result<(), String> {
    let m = get_model("mvn").map_err(err)?;
    let program = m.program();
    let compiled = CompiledProgram::new(&program).map_err(err)?;
    let f = m.function();
    runner()
        .run(&(prop::collection::vec(-1.5f64..1.5, 1..8), 0.5f64..2.0), |(p, sigma)| {
            let mut args = vec![Value::array(&p), Value::array(&p), Value::D(sigma), Value::I(p.len() as i64)];
            let before: Vec<Vec<u64>> = snapshot(&args);
            let slots = layout_slots(&f, &args, &["x".into(), "p".into(), "sigma".into()]).unwrap();
            fd_gradient(&mut Interpreter::new(&compiled), "mvn", &mut args, &slots, &NumDiffConfig::default()).unwrap();
            prop_assert_eq!(snapshot(&args), before);
            Ok(())
        })
        .map_err(err)
}

fn snapshot(args: &[Value]) -> Vec<Vec<u64>> {
    args.iter()
        .map(|v| match v {
            Value::D(d) => vec![d.to_bits()],
            Value::I(i) => vec![*i as u64],
            Value::Arr(a) => a.to_vec().iter().map(|x| x.to_bits()).collect(),
        })
        .collect()
}

type Suite = fn() -> Result<(), String>;

fn property_suites() -> Outcome {
    let suites: [(&str, Suite); 4] = [
        ("round-trip", corpus_round_trip),
        ("tape", tape_lifo),
        ("accumulation", accumulation_doubles),
        ("fd-restore", fd_restores_inputs),
    ];
    let mut parts = Vec::new();
    for (name, run) in suites {
        let t = Instant::now();
        run().map_err(|e| format!("{name}: {e}"))?;
        let dt = t.elapsed();
        ensure!(dt < Duration::from_secs(5), "{name} took {dt:.2?}");
        parts.push(format!("{name} {:.2}s", dt.as_secs_f64()));
    }
    Ok(parts.join(", "))
}

type Criterion = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, u64, Criterion); 9] = [
        ("Breit-Wigner exactness", 1, breit_wigner_exactness),
        ("gradient correctness", 30, gradient_correctness),
        ("evaluation-count law", 5, evaluation_count_law),
        ("cost-factor bounds", 30, cost_bounds),
        ("sum scaling speedup", 60, sum_speedup),
        ("mvn speedup monotonicity", 60, mvn_speedup),
        ("gaus fit", 60, gaus_fit),
        ("sum gradient golden structure", 1, golden_sum),
        ("property suites", 20, property_suites),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let dt = t.elapsed();
        let outcome = match outcome {
            Ok(_) if dt > Duration::from_secs(limit) => Err(format!("took {:.2}s, limit {limit}s", dt.as_secs_f64())),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({:.2}s): {detail}", i + 1, dt.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({:.2}s): {why}", i + 1, dt.as_secs_f64());
            }
        }
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
