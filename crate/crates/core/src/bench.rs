//! Timing and accuracy reports comparing the gradient backends on the
//! built-in models.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Backend, EngineError, GradientEngine};
use crate::eval::{EvalStats, Value};
use crate::models::{get_model, reference_gradient, ModelEntry, ModelError};
use crate::numdiff::NumDiffConfig;

pub const MIN_REPS: usize = 5;
pub const MAX_DIM: usize = 4096;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid benchmark request: {0}")]
    BadRequest(String),
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub profile: String,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" }.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    /// Array length for array models, number of gradient slots otherwise.
    pub dim: usize,
    pub backend: String,
    /// Median wall time of one gradient; absent when timing is disabled.
    pub median_ns: Option<u64>,
    pub scalar_ops: u64,
    pub func_evals: u64,
    pub max_abs_err: f64,
    /// Whether every component matched the reference within tolerance.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub environment: Environment,
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub reps: usize,
    pub timing: bool,
    pub numdiff: NumDiffConfig,
    /// Largest accepted dimension.
    pub max_dim: usize,
    /// Gradient slots to benchmark; the model's own list when `None`.
    pub wrt: Option<Vec<String>>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { reps: MIN_REPS, timing: true, numdiff: NumDiffConfig::default(), max_dim: MAX_DIM, wrt: None }
    }
}

/// Relative tolerance a backend must meet against the closed form:
/// `|got - ref| <= tol * (1 + |ref|)`.
pub fn tolerance(backend: Backend) -> f64 {
    match backend {
        Backend::ForwardAd | Backend::ReverseAd => 1e-12,
        Backend::Numeric => 1e-5,
    }
}

struct Target {
    entry: &'static ModelEntry,
    engine: GradientEngine,
    /// Positions of the benchmarked slots inside the reference gradient.
    pick: Option<Vec<usize>>,
}

impl Target {
    fn new(model: &str, opts: &BenchOptions) -> Result<Self, BenchError> {
        let entry = get_model(model)?;
        let program = entry.program();
        let full = GradientEngine::new(&program, entry.name, &entry.wrt())?;
        let (engine, pick) = match &opts.wrt {
            None => (full, None),
            Some(w) => {
                let sub = GradientEngine::new(&program, entry.name, w)?;
                (sub, Some(full))
            }
        };
        let pick = match pick {
            None => None,
            Some(full) => {
                let point = entry.bench_point(1);
                let all = full.slots(&point)?;
                let mine = engine.slots(&point)?;
                let idx = mine
                    .iter()
                    .map(|s| all.iter().position(|a| a == s))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| BenchError::BadRequest("wrt outside the model's reference gradient".into()))?;
                Some(idx)
            }
        };
        Ok(Target { entry, engine, pick })
    }

    fn reference(&self, point: &[Value]) -> Result<Vec<f64>, BenchError> {
        let r = reference_gradient(self.entry.name, point)?;
        Ok(match &self.pick {
            None => r,
            Some(idx) => idx.iter().map(|&i| r[i]).collect(),
        })
    }

    fn row(&self, dim: usize, backend: Backend, point: &[Value], opts: &BenchOptions) -> Result<BenchRow, BenchError> {
        let reference = self.reference(point)?;
        let mut stats = EvalStats::default();
        let g = self.engine.gradient(backend, point, &opts.numdiff, &mut stats)?;
        let tol = tolerance(backend);
        let mut valid = g.len() == reference.len();
        let mut max_abs_err: f64 = 0.0;
        for (a, r) in g.iter().zip(&reference) {
            let e = (a - r).abs();
            max_abs_err = max_abs_err.max(e);
            valid &= e <= tol * (1.0 + r.abs());
        }
        let median_ns = if opts.timing { Some(self.time(backend, point, opts)?) } else { None };
        Ok(BenchRow {
            model: self.entry.name.into(),
            dim,
            backend: backend.label().into(),
            median_ns,
            scalar_ops: stats.scalar_ops,
            func_evals: stats.func_evals,
            max_abs_err,
            valid,
        })
    }

    fn time(&self, backend: Backend, point: &[Value], opts: &BenchOptions) -> Result<u64, BenchError> {
        let mut samples = Vec::with_capacity(opts.reps);
        for _ in 0..opts.reps {
            let mut stats = EvalStats::default();
            let t = Instant::now();
            let g = self.engine.gradient(backend, point, &opts.numdiff, &mut stats)?;
            samples.push(t.elapsed().as_nanos() as u64);
            std::hint::black_box(g);
        }
        samples.sort_unstable();
        Ok(samples[samples.len() / 2])
    }
}

fn check_reps(opts: &BenchOptions) -> Result<(), BenchError> {
    if opts.reps < MIN_REPS {
        return Err(BenchError::BadRequest(format!("at least {MIN_REPS} repetitions required")));
    }
    Ok(())
}

fn report(opts: &BenchOptions, mut rows: Vec<BenchRow>) -> BenchReport {
    rows.sort_by(|a, b| (a.model.as_str(), a.dim).cmp(&(b.model.as_str(), b.dim)));
    BenchReport { environment: Environment::current(), repetitions: opts.reps, rows }
}

/// Gradient cost per backend over a range of array lengths, on the
/// deterministic filler inputs of [`ModelEntry::bench_point`].
pub fn run_scaling(model: &str, dims: &[usize], backends: &[Backend], opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    check_reps(opts)?;
    let target = Target::new(model, opts)?;
    if target.entry.dims.is_none() {
        return Err(BenchError::BadRequest(format!("`{model}` has no array parameter")));
    }
    if dims.is_empty() || dims[0] == 0 || dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadRequest("dims must be positive and strictly ascending".into()));
    }
    if let Some(d) = dims.iter().find(|d| **d > opts.max_dim) {
        return Err(BenchError::BadRequest(format!("dim {d} exceeds the limit of {}", opts.max_dim)));
    }
    let mut rows = Vec::new();
    for &dim in dims {
        let point = target.entry.bench_point(dim);
        for &b in backends {
            rows.push(target.row(dim, b, &point, opts)?);
        }
    }
    Ok(report(opts, rows))
}

/// Every backend at each point, with errors against the closed form.
pub fn run_accuracy(model: &str, points: &[Vec<Value>], opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    check_reps(opts)?;
    let target = Target::new(model, opts)?;
    let mut rows = Vec::new();
    for point in points {
        let dim = target.engine.slots(point)?.len();
        for b in Backend::ALL {
            rows.push(target.row(dim, b, point, opts)?);
        }
    }
    Ok(report(opts, rows))
}

impl BenchReport {
    pub fn row(&self, model: &str, dim: usize, backend: Backend) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.model == model && r.dim == dim && r.backend == backend.label())
    }

    /// Ratio of median times, `slow / fast`.
    pub fn speedup(&self, model: &str, dim: usize, slow: Backend, fast: Backend) -> Option<f64> {
        let s = self.row(model, dim, slow)?.median_ns? as f64;
        let f = self.row(model, dim, fast)?.median_ns? as f64;
        Some(s / f.max(1.0))
    }

    pub fn all_valid(&self) -> bool {
        self.rows.iter().all(|r| r.valid)
    }

    pub fn to_json(&self) -> Result<String, BenchError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(s)?)
    }

    /// One line per row under a header; the environment is not included.
    pub fn to_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::BadRequest(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn rows_from_csv(s: &str) -> Result<Vec<BenchRow>, BenchError> {
        let mut r = csv::Reader::from_reader(s.as_bytes());
        Ok(r.deserialize().collect::<Result<_, _>>()?)
    }
}
