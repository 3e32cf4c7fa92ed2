//! Central finite differences over interpreted functions.

use thiserror::Error;

use crate::ast::{FuncDef, Type};
use crate::eval::{EvalError, Interpreter, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumDiffConfig {
    pub eps: f64,
}

impl Default for NumDiffConfig {
    fn default() -> Self {
        NumDiffConfig { eps: 1e-8 }
    }
}

impl NumDiffConfig {
    pub fn new(eps: f64) -> Result<Self, NumDiffError> {
        if eps > 0.0 && eps.is_finite() {
            Ok(NumDiffConfig { eps })
        } else {
            Err(NumDiffError::BadStep(eps))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumDiffError {
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("argument {0} is not a double")]
    NotDouble(usize),
    #[error("argument {0} has no element {1}")]
    NoElement(usize, usize),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A scalar input: a double argument, or one element of an array argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArgSlot {
    Scalar(usize),
    Element(usize, usize),
}

/// Slots for `wrt` in gradient layout order: array elements first, then
/// scalars, each group in parameter order.
pub fn layout_slots(f: &FuncDef, args: &[Value], wrt: &[String]) -> Result<Vec<ArgSlot>, NumDiffError> {
    for w in wrt {
        if f.param(w).is_none() {
            return Err(NumDiffError::UnknownParameter(w.clone()));
        }
    }
    let chosen = |name: &str| wrt.iter().any(|w| w == name);
    let mut slots = Vec::new();
    for (i, p) in f.params.iter().enumerate() {
        if p.ty == Type::DoubleArray && chosen(&p.name) {
            let Some(Value::Arr(a)) = args.get(i) else { return Err(NumDiffError::NotDouble(i)) };
            slots.extend((0..a.len()).map(|k| ArgSlot::Element(i, k)));
        }
    }
    for (i, p) in f.params.iter().enumerate() {
        if p.ty == Type::Double && chosen(&p.name) {
            slots.push(ArgSlot::Scalar(i));
        }
    }
    Ok(slots)
}

fn read(args: &[Value], slot: ArgSlot) -> Result<f64, NumDiffError> {
    match slot {
        ArgSlot::Scalar(i) => match args.get(i) {
            Some(Value::D(v)) => Ok(*v),
            _ => Err(NumDiffError::NotDouble(i)),
        },
        ArgSlot::Element(i, k) => match args.get(i) {
            Some(Value::Arr(a)) if k < a.len() => Ok(a.get(k)),
            Some(Value::Arr(_)) => Err(NumDiffError::NoElement(i, k)),
            _ => Err(NumDiffError::NotDouble(i)),
        },
    }
}

fn write(args: &mut [Value], slot: ArgSlot, v: f64) {
    match slot {
        ArgSlot::Scalar(i) => args[i] = Value::D(v),
        ArgSlot::Element(i, k) => {
            if let Value::Arr(a) = &args[i] {
                a.set(k, v)
            }
        }
    }
}

/// `(f(.., x + eps, ..) - f(.., x - eps, ..)) / (2 eps)`. The slot holds its
/// original value again when this returns, also on error.
pub fn fd_partial(
    interp: &mut Interpreter<'_>,
    fname: &str,
    args: &mut [Value],
    slot: ArgSlot,
    cfg: &NumDiffConfig,
) -> Result<f64, NumDiffError> {
    let x = read(args, slot)?;
    write(args, slot, x + cfg.eps);
    let hi = interp.call(fname, args);
    write(args, slot, x - cfg.eps);
    let lo = interp.call(fname, args);
    write(args, slot, x);
    Ok((hi? - lo?) / (2.0 * cfg.eps))
}

/// One [`fd_partial`] per slot: exactly `2 * slots.len()` calls.
pub fn fd_gradient(
    interp: &mut Interpreter<'_>,
    fname: &str,
    args: &mut [Value],
    slots: &[ArgSlot],
    cfg: &NumDiffConfig,
) -> Result<Vec<f64>, NumDiffError> {
    slots.iter().map(|&s| fd_partial(interp, fname, args, s, cfg)).collect()
}
