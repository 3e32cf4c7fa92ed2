//! One function, three ways to get its gradient. Shared by the benchmarks,
//! the fitter and the command line.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::{self, AdError, DiffRequest, GradFunc, GradRequest, Wrt};
use crate::ast::{FuncDef, Program};
use crate::eval::{Array, CompiledProgram, EvalError, EvalStats, Interpreter, Value};
use crate::numdiff::{fd_gradient, layout_slots, ArgSlot, NumDiffConfig, NumDiffError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backend {
    ForwardAd,
    ReverseAd,
    Numeric,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::ForwardAd, Backend::ReverseAd, Backend::Numeric];

    pub fn label(self) -> &'static str {
        match self {
            Backend::ForwardAd => "fwd-AD",
            Backend::ReverseAd => "rev-AD",
            Backend::Numeric => "ND",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fwd-ad" | "fwd" | "forward" => Ok(Backend::ForwardAd),
            "rev-ad" | "rev" | "reverse" | "ad" => Ok(Backend::ReverseAd),
            "nd" | "fd" | "numeric" => Ok(Backend::Numeric),
            _ => Err(format!("unknown backend `{s}` (expected ad, fwd-ad, rev-ad, fd or nd)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("no function named `{0}`")]
    UnknownFunction(String),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    NumDiff(#[from] NumDiffError),
}

/// One gradient with its evaluation accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub function: String,
    pub backend: String,
    /// `p[0]`, `sigma`, ... in gradient layout order.
    pub slots: Vec<String>,
    pub gradient: Vec<f64>,
    /// Calls of the original function.
    pub func_evals: u64,
    /// Calls of generated derivative or gradient functions.
    pub derivative_evals: u64,
    pub scalar_ops: u64,
}

/// A function prepared for repeated gradient evaluation.
pub struct GradientEngine {
    pub func: FuncDef,
    pub grad: GradFunc,
    wrt: Vec<String>,
    context: Vec<FuncDef>,
    /// original function and its gradient
    compiled: CompiledProgram,
    forward: RefCell<HashMap<Wrt, Rc<CompiledProgram>>>,
}

fn run(program: &CompiledProgram, name: &str, args: &[Value], stats: &mut EvalStats) -> Result<f64, EvalError> {
    let mut it = Interpreter::new(program);
    it.stats = *stats;
    let r = it.call(name, args);
    *stats = it.stats;
    r
}

impl GradientEngine {
    pub fn new(program: &Program, fname: &str, wrt: &[String]) -> Result<Self, EngineError> {
        let func = program.function(fname).ok_or_else(|| EngineError::UnknownFunction(fname.to_string()))?.clone();
        let grad = ad::gradient(&GradRequest::new(func.clone(), wrt.iter().cloned()).with_context(&program.functions))?;
        let mut all = program.clone();
        all.functions.push(grad.gradient.clone());
        let compiled = CompiledProgram::new(&all)?;
        Ok(GradientEngine { func, grad, wrt: wrt.to_vec(), context: program.functions.clone(), compiled, forward: RefCell::default() })
    }

    pub fn wrt(&self) -> &[String] {
        &self.wrt
    }

    pub fn slots(&self, args: &[Value]) -> Result<Vec<ArgSlot>, EngineError> {
        Ok(layout_slots(&self.func, args, &self.wrt)?)
    }

    pub fn value(&self, args: &[Value], stats: &mut EvalStats) -> Result<f64, EngineError> {
        Ok(run(&self.compiled, &self.func.name, args, stats)?)
    }

    /// One call of the generated gradient function on a zeroed `_result`.
    pub fn reverse(&self, args: &[Value], stats: &mut EvalStats) -> Result<Vec<f64>, EngineError> {
        let n = self.grad.result_len(args).ok_or_else(|| EvalError::TypeMismatch("missing array argument".into()))?;
        let out = Array::zeros(n);
        let mut all = args.to_vec();
        all.push(Value::Arr(out.clone()));
        run(&self.compiled, &self.grad.gradient.name, &all, stats)?;
        Ok(out.to_vec())
    }

    /// Central differences, two calls of the original per slot.
    pub fn numeric(&self, args: &[Value], cfg: &NumDiffConfig, stats: &mut EvalStats) -> Result<Vec<f64>, EngineError> {
        let mut args = args.to_vec();
        let slots = self.slots(&args)?;
        let mut it = Interpreter::new(&self.compiled);
        it.stats = *stats;
        let r = fd_gradient(&mut it, &self.func.name, &mut args, &slots, cfg);
        *stats = it.stats;
        Ok(r?)
    }

    /// Forward-mode derivative for one slot.
    pub fn forward_partial(&self, wrt: &Wrt, args: &[Value], stats: &mut EvalStats) -> Result<f64, EngineError> {
        let compiled = self.forward_program(wrt)?;
        let name = ad::forward::derivative_name(&self.func.name, wrt);
        Ok(run(&compiled, &name, args, stats)?)
    }

    /// Forward mode over every slot: one derivative function per slot.
    pub fn forward(&self, args: &[Value], stats: &mut EvalStats) -> Result<Vec<f64>, EngineError> {
        let params = &self.func.params;
        self.slots(args)?
            .into_iter()
            .map(|s| {
                let wrt = match s {
                    ArgSlot::Scalar(i) => Wrt::Param(params[i].name.clone()),
                    ArgSlot::Element(i, k) => Wrt::Slot(params[i].name.clone(), k),
                };
                self.forward_partial(&wrt, args, stats)
            })
            .collect()
    }

    pub fn gradient(&self, backend: Backend, args: &[Value], cfg: &NumDiffConfig, stats: &mut EvalStats) -> Result<Vec<f64>, EngineError> {
        match backend {
            Backend::ForwardAd => self.forward(args, stats),
            Backend::ReverseAd => self.reverse(args, stats),
            Backend::Numeric => self.numeric(args, cfg, stats),
        }
    }

    pub fn slot_label(&self, slot: ArgSlot) -> String {
        match slot {
            ArgSlot::Scalar(i) => self.func.params[i].name.clone(),
            ArgSlot::Element(i, k) => format!("{}[{k}]", self.func.params[i].name),
        }
    }

    pub fn report(&self, backend: Backend, args: &[Value], cfg: &NumDiffConfig) -> Result<GradReport, EngineError> {
        let mut stats = EvalStats::default();
        let gradient = self.gradient(backend, args, cfg, &mut stats)?;
        let slots: Vec<String> = self.slots(args)?.into_iter().map(|s| self.slot_label(s)).collect();
        let (func_evals, derivative_evals) = match backend {
            Backend::Numeric => (stats.func_evals, 0),
            _ => (0, stats.func_evals),
        };
        Ok(GradReport {
            function: self.func.name.clone(),
            backend: backend.label().into(),
            slots,
            gradient,
            func_evals,
            derivative_evals,
            scalar_ops: stats.scalar_ops,
        })
    }

    fn forward_program(&self, wrt: &Wrt) -> Result<Rc<CompiledProgram>, EngineError> {
        if let Some(c) = self.forward.borrow().get(wrt) {
            return Ok(c.clone());
        }
        let req = DiffRequest::new(self.func.clone(), wrt.clone()).with_context(&self.context);
        let d = ad::differentiate(&req)?;
        let c = Rc::new(CompiledProgram::new(&Program { functions: vec![d.derivative] })?);
        self.forward.borrow_mut().insert(wrt.clone(), c.clone());
        Ok(c)
    }
}
