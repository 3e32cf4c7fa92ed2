//! Tree-walking interpreter. Original functions, generated derivatives and
//! the finite-difference baseline all run here, so cost comparisons
//! between them measure the algorithms rather than code generation.

mod compile;
mod exec;
mod tape;

use std::cell::Cell;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::ast::{Program, Type};
use compile::{compile_program, CFunc};

pub use tape::Tape;

/// Default bound on executed statements per top-level call.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000_000;

/// Nested user-function calls deeper than this abort with `NonTermination`.
const MAX_CALL_DEPTH: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` expects {expected} argument(s), got {got}")]
    ArityMismatch { function: String, expected: usize, got: usize },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("index {index} out of bounds for `{array}` of length {len}")]
    IndexOutOfBounds { array: String, index: i64, len: usize },
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("execution exceeded {0} steps")]
    NonTermination(u64),
    #[error("pop from an empty tape")]
    PopOnEmpty,
}

/// Caller-owned array. Clones share storage, so writes made by a called
/// function are visible to the caller (C pointer semantics).
#[derive(Clone)]
pub struct Array(Rc<[Cell<f64>]>);

impl Array {
    pub fn from_slice(values: &[f64]) -> Self {
        Array(values.iter().map(|&v| Cell::new(v)).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Array((0..len).map(|_| Cell::new(0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.0[i].get()
    }

    #[inline]
    pub fn set(&self, i: usize, v: f64) {
        self.0[i].set(v)
    }

    pub fn fill(&self, v: f64) {
        self.0.iter().for_each(|c| c.set(v));
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().map(Cell::get).collect()
    }

    #[inline]
    pub(crate) fn cells(&self) -> &[Cell<f64>] {
        &self.0
    }
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter().map(Cell::get)).finish()
    }
}

impl PartialEq for Array {
    fn eq(&self, other: &Self) -> bool {
        self.to_vec() == other.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    D(f64),
    I(i64),
    Arr(Array),
}

impl Value {
    pub fn array(values: &[f64]) -> Self {
        Value::Arr(Array::from_slice(values))
    }

    pub fn ty(&self) -> Type {
        match self {
            Value::D(_) => Type::Double,
            Value::I(_) => Type::Int,
            Value::Arr(_) => Type::DoubleArray,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::D(v) => Some(*v),
            Value::I(v) => Some(*v as f64),
            Value::Arr(_) => None,
        }
    }
}

/// Operation counters. All fields only ever grow during a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Arithmetic, comparisons, intrinsic calls, tape pushes/pops, loop
    /// counter updates and compound assignments, one each.
    pub scalar_ops: u64,
    pub intrinsic_calls: u64,
    /// Top-level function invocations.
    pub func_evals: u64,
}

impl EvalStats {
    pub fn since(&self, earlier: &EvalStats) -> EvalStats {
        EvalStats {
            scalar_ops: self.scalar_ops - earlier.scalar_ops,
            intrinsic_calls: self.intrinsic_calls - earlier.intrinsic_calls,
            func_evals: self.func_evals - earlier.func_evals,
        }
    }
}

/// A program lowered for execution. Immutable and shareable across threads;
/// each thread drives it through its own [`Interpreter`].
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    funcs: Vec<CFunc>,
}

impl CompiledProgram {
    pub fn new(program: &Program) -> Result<Self, EvalError> {
        Ok(CompiledProgram { funcs: compile_program(program)? })
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.funcs.iter().position(|f| f.name == name)
    }
}

pub struct Interpreter<'c> {
    program: &'c CompiledProgram,
    pub stats: EvalStats,
    max_steps: u64,
    steps: u64,
    depth: usize,
    residue: usize,
}

impl<'c> Interpreter<'c> {
    pub fn new(program: &'c CompiledProgram) -> Self {
        Interpreter { program, stats: EvalStats::default(), max_steps: DEFAULT_MAX_STEPS, steps: 0, depth: 0, residue: 0 }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    /// Invoke `name` with `args`, applying parameter defaults for missing
    /// trailing arguments. Counts one function evaluation.
    pub fn call(&mut self, name: &str, args: &[Value]) -> Result<f64, EvalError> {
        let idx = self.program.function_index(name).ok_or_else(|| EvalError::UnknownFunction(name.to_string()))?;
        self.stats.func_evals += 1;
        self.steps = 0;
        self.call_index(idx, args)
    }

    /// Elements left on the tapes of the most recent top-level call's frame
    /// when it returned.
    pub fn last_tape_residue(&self) -> usize {
        self.residue
    }
}

/// Compile and run `name` once.
pub fn call(program: &Program, name: &str, args: &[Value]) -> Result<f64, EvalError> {
    let compiled = CompiledProgram::new(program)?;
    Interpreter::new(&compiled).call(name, args)
}

/// Like [`call`], accumulating counters into `stats`.
pub fn call_counted(program: &Program, name: &str, args: &[Value], stats: &mut EvalStats) -> Result<f64, EvalError> {
    let compiled = CompiledProgram::new(program)?;
    let mut interp = Interpreter::new(&compiled);
    interp.stats = *stats;
    let r = interp.call(name, args);
    *stats = interp.stats;
    r
}
