//! Least-squares fits of a model to a binned histogram by gradient descent,
//! with the gradient taken either from a generated reverse-mode function or
//! from central differences.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{Program, Type};
use crate::engine::{Backend, EngineError, GradientEngine};
use crate::eval::{EvalStats, Value};
use crate::models::get_model;
use crate::numdiff::NumDiffConfig;
use crate::parser::parse;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid histogram: {0}")]
    BadHistogram(String),
    #[error("histogram csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid fit problem: {0}")]
    BadProblem(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    lo: f64,
    hi: f64,
    count: f64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, counts: Vec<f64>) -> Result<Self, FitError> {
        if counts.is_empty() || edges.len() != counts.len() + 1 {
            return Err(FitError::BadHistogram(format!("{} edges for {} bins", edges.len(), counts.len())));
        }
        if !edges.iter().all(|e| e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FitError::BadHistogram("edges must be finite and strictly increasing".into()));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(FitError::BadHistogram("counts must be finite and non-negative".into()));
        }
        Ok(Histogram { edges, counts })
    }

    /// `bins` equal-width empty bins over `[lo, hi)`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self, FitError> {
        if bins == 0 {
            return Err(FitError::BadHistogram("no bins".into()));
        }
        let w = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * w).collect();
        edges.push(hi);
        Histogram::new(edges, vec![0.0; bins])
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Counts as a density: `count / (total * width)`; all zero when empty.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total();
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, c)| if n > 0.0 { c / (n * (w[1] - w[0])) } else { 0.0 })
            .collect()
    }

    /// Index of the bin holding `x`; the last bin is closed on the right.
    pub fn find(&self, x: f64) -> Option<usize> {
        let (lo, hi) = (self.edges[0], *self.edges.last().unwrap());
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let i = self.edges.partition_point(|e| *e <= x);
        Some(i.saturating_sub(1).min(self.bins() - 1))
    }

    pub fn from_csv(reader: impl io::Read) -> Result<Self, FitError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows: Vec<Row> = rdr.deserialize().collect::<Result<_, _>>()?;
        let Some(first) = rows.first() else { return Err(FitError::BadHistogram("no rows".into())) };
        let mut edges = vec![first.lo];
        for (i, r) in rows.iter().enumerate() {
            if r.lo != *edges.last().unwrap() {
                return Err(FitError::BadHistogram(format!("row {} does not start where the previous one ends", i + 1)));
            }
            edges.push(r.hi);
        }
        Histogram::new(edges, rows.iter().map(|r| r.count).collect())
    }

    pub fn to_csv(&self, writer: impl io::Write) -> Result<(), FitError> {
        let mut w = csv::Writer::from_writer(writer);
        for (e, c) in self.edges.windows(2).zip(&self.counts) {
            w.serialize(Row { lo: e[0], hi: e[1], count: *c })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// One normal component of a sampling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Gaussian {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Gaussian { weight: 1.0, mu, sigma }
    }
}

/// Histogram of `n_samples` draws from a Gaussian mixture over `[lo, hi]`.
/// Draws falling outside the range are dropped. Samples come from ChaCha8
/// seeded with `seed`: a uniform draw picks the component, then Box-Muller
/// turns two uniforms into one normal deviate.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
pub fn synthesize_histogram(
    components: &[Gaussian],
    n_samples: usize,
    bins: usize,
    range: (f64, f64),
    seed: u64,
) -> Result<Histogram, FitError> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.is_empty() || !(total > 0.0) || components.iter().any(|c| c.weight < 0.0 || !(c.sigma > 0.0)) {
        return Err(FitError::BadProblem("need components with positive weights and widths".into()));
    }
    let mut h = Histogram::uniform(range.0, range.1, bins)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let mut pick = rng.random::<f64>() * total;
        let c = components.iter().find(|c| {
            pick -= c.weight;
            pick < 0.0
        });
        let c = c.unwrap_or(components.last().unwrap());
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        if let Some(i) = h.find(c.mu + c.sigma * z) {
            h.counts[i] += 1.0;
        }
    }
    Ok(h)
}

/// A model `f(double x, double θ1, ...)` given as DSL source.
#[derive(Debug, Clone, PartialEq)]
pub struct FitModel {
    pub name: String,
    pub program: Program,
}

impl FitModel {
    pub fn builtin(name: &str) -> Result<Self, FitError> {
        let m = get_model(name).map_err(|e| FitError::BadProblem(e.to_string()))?;
        FitModel::from_program(m.name, m.program())
    }

    pub fn from_program(name: &str, program: Program) -> Result<Self, FitError> {
        let f = program.function(name).ok_or_else(|| FitError::BadProblem(format!("no function `{name}`")))?;
        if f.params.is_empty() || f.params.iter().any(|p| p.ty != Type::Double) {
            return Err(FitError::BadProblem(format!("`{name}` must take only doubles, the first being x")));
        }
        Ok(FitModel { name: name.to_string(), program })
    }

    /// Sum of `k` Gaussians, parameters `A0, mu0, sigma0, A1, ...`.
    pub fn mixture(k: usize) -> Self {
        let name = format!("mix{k}");
        let params: Vec<String> = (0..k).map(|j| format!("double A{j}, double mu{j}, double sigma{j}")).collect();
        let mut src = format!("double {name}(double x, {}) {{\n    double s = 0;\n    double t = 0;\n", params.join(", "));
        for j in 0..k {
            let _ = writeln!(src, "    t = (x - mu{j}) / sigma{j};\n    s += A{j} * exp(-0.5 * t * t);");
        }
        src.push_str("    return s;\n}\n");
        let program = parse(&src).expect("generated mixture parses");
        FitModel { name, program }
    }

    pub fn param_names(&self) -> Vec<String> {
        let f = self.program.function(&self.name).expect("checked on construction");
        f.params[1..].iter().map(|p| p.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub model: FitModel,
    pub histogram: Histogram,
    pub init: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub gtol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub shrink: f64,
    pub numdiff: NumDiffConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { gtol: 1e-8, max_iter: 10_000, c1: 1e-4, shrink: 0.5, numdiff: NumDiffConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No step along the negative gradient decreased the objective.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    /// Optimizer steps; each computes exactly one gradient.
    pub iterations: usize,
    pub grad_evals: usize,
    /// Function evaluations spent computing gradients (a reverse-mode
    /// gradient counts as one).
    pub func_evals: u64,
    /// Objective evaluations made by the line search.
    pub objective_evals: u64,
    /// Interpreter operations spent on gradients.
    pub gradient_ops: u64,
    pub converged: bool,
    pub stop: StopReason,
}

pub const OBJECTIVE: &str = "objective";

/// DSL source of the least-squares objective for `model`.
pub fn objective_source(model: &FitModel) -> String {
    let names = model.param_names();
    let decl: Vec<String> = names.iter().map(|n| format!("double {n}")).collect();
    format!(
        "double {OBJECTIVE}(double* xs, double* ys, int n, {}) {{\n    double s = 0;\n    for (int i = 0; i < n; i++) {{\n        double r = {}(xs[i], {}) - ys[i];\n        s += r * r;\n    }}\n    return s;\n}}\n",
        decl.join(", "),
        model.name,
        names.join(", ")
    )
}

fn objective_program(model: &FitModel) -> Program {
    let mut p = model.program.clone();
    let obj = parse(&objective_source(model)).expect("generated objective parses");
    p.functions.extend(obj.functions);
    p
}

pub fn fit(problem: &FitProblem, backend: Backend, opts: &FitOptions) -> Result<FitResult, FitError> {
    let names = problem.model.param_names();
    if names.len() != problem.init.len() {
        return Err(FitError::BadProblem(format!("{} initial values for {} parameters", problem.init.len(), names.len())));
    }
    let program = objective_program(&problem.model);
    let engine = GradientEngine::new(&program, OBJECTIVE, &names)?;
    let h = &problem.histogram;
    let fixed = [Value::array(&h.centers()), Value::array(&h.density()), Value::I(h.bins() as i64)];
    let args = |theta: &[f64]| -> Vec<Value> { fixed.iter().cloned().chain(theta.iter().map(|&v| Value::D(v))).collect() };

    let mut obj_stats = EvalStats::default();
    let mut grad_stats = EvalStats::default();
    let mut x = problem.init.clone();
    let mut fx = engine.value(&args(&x), &mut obj_stats)?;
    let mut step: Option<f64> = None;
    let mut iterations = 0;
    let mut gnorm;
    let stop = loop {
        let g = engine.gradient(backend, &args(&x), &opts.numdiff, &mut grad_stats)?;
        iterations += 1;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        gnorm = gg.sqrt();
        if gnorm <= opts.gtol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIterations;
        }
        // Backtracking from twice the last accepted step; the first trial
        // moves a unit distance.
        let mut t = step.map_or(1.0 / gnorm, |s| (2.0 * s).min(1e12));
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - t * gi).collect();
            // A trial point outside the model domain is treated as uphill.
            let ft = engine.value(&args(&trial), &mut obj_stats).unwrap_or(f64::INFINITY);
            if ft <= fx - opts.c1 * t * gg {
                break Some((trial, ft));
            }
            t *= opts.shrink;
            if t < 1e-300 {
                break None;
            }
        };
        match accepted {
            Some((trial, ft)) => {
                x = trial;
                fx = ft;
                step = Some(t);
            }
            None => break StopReason::LineSearchFailed,
        }
    };
    Ok(FitResult {
        params: x,
        objective: fx,
        gradient_norm: gnorm,
        iterations,
        grad_evals: iterations,
        func_evals: grad_stats.func_evals,
        objective_evals: obj_stats.func_evals,
        gradient_ops: grad_stats.scalar_ops,
        converged: stop == StopReason::GradientTolerance,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesis_is_deterministic() {
        let g = [Gaussian::new(0.0, 1.0)];
        let a = synthesize_histogram(&g, 5000, 20, (-5.0, 5.0), 7).unwrap();
        let b = synthesize_histogram(&g, 5000, 20, (-5.0, 5.0), 7).unwrap();
        assert_eq!(a, b);
        let c = synthesize_histogram(&g, 5000, 20, (-5.0, 5.0), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_bin_holds_every_in_range_sample() {
        let h = synthesize_histogram(&[Gaussian::new(0.0, 1.0)], 1000, 1, (-100.0, 100.0), 1).unwrap();
        assert_eq!(h.counts, vec![1000.0]);
        let h = synthesize_histogram(&[Gaussian::new(0.0, 1.0)], 1000, 1, (0.0, 100.0), 1).unwrap();
        assert!(h.counts[0] > 400.0 && h.counts[0] < 600.0);
    }

    #[test]
    fn csv_round_trip() {
        let h = Histogram::new(vec![0.0, 0.5, 1.5], vec![3.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        h.to_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "lo,hi,count\n0.0,0.5,3.0\n0.5,1.5,0.0\n");
        assert_eq!(Histogram::from_csv(buf.as_slice()).unwrap(), h);
        assert!(Histogram::from_csv("lo,hi,count\n0,1,1\n2,3,1\n".as_bytes()).is_err());
        assert!(Histogram::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Histogram::new(vec![0.0, 1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn density_and_bins() {
        let h = Histogram::new(vec![0.0, 1.0, 3.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(h.density(), vec![0.5, 0.25]);
        assert_eq!(h.find(3.0), Some(1));
        assert_eq!(h.find(1.0), Some(1));
        assert_eq!(h.find(-0.1), None);
        let empty = Histogram::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(empty.density(), vec![0.0; 4]);
    }

    #[test]
    fn empty_histogram_with_zero_model_is_already_optimal() {
        let problem = FitProblem {
            model: FitModel::builtin("gaus").unwrap(),
            histogram: Histogram::uniform(-5.0, 5.0, 10).unwrap(),
            init: vec![0.0, 0.3, 1.2],
        };
        for b in [Backend::ReverseAd, Backend::Numeric] {
            let r = fit(&problem, b, &FitOptions::default()).unwrap();
            assert_eq!(r.objective, 0.0);
            assert!(r.converged);
            assert!(r.iterations <= 1);
        }
    }

    #[test]
    fn mixture_source() {
        let m = FitModel::mixture(2);
        assert_eq!(m.param_names(), vec!["A0", "mu0", "sigma0", "A1", "mu1", "sigma1"]);
        assert!(objective_source(&m).contains("mix2(xs[i], A0, mu0, sigma0, A1, mu1, sigma1)"));
    }

    #[test]
    fn bad_problems() {
        let p = FitProblem { model: FitModel::builtin("gaus").unwrap(), histogram: Histogram::uniform(0.0, 1.0, 2).unwrap(), init: vec![1.0] };
        assert!(matches!(fit(&p, Backend::ReverseAd, &FitOptions::default()), Err(FitError::BadProblem(_))));
        assert!(FitModel::builtin("sum").is_err());
    }
}
