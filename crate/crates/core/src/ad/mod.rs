//! Source transformations: forward-mode derivatives and reverse-mode
//! gradients, both producing ordinary [`FuncDef`]s.

pub(crate) mod analysis;
pub(crate) mod build;
pub mod forward;
pub(crate) mod inline;
pub mod reverse;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ast::*;
use crate::error::ParseError;
use crate::validate::Diagnostic;

pub use forward::{differentiate, differentiate_source, DerivedFunc, DiffRequest};
pub use reverse::{gradient, gradient_source, GradFunc, GradRequest, SlotGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdError {
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("function `{0}` does not return a scalar double")]
    NonScalarOutput(String),
}

pub(crate) fn unsupported<T>(what: impl Into<String>) -> Result<T, AdError> {
    Err(AdError::UnsupportedConstruct(what.into()))
}

/// Errors of the parse, validate, transform, print pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("no function named `{0}`")]
    UnknownFunction(String),
    #[error("{0}")]
    Ad(#[from] AdError),
    #[error("bad differentiation target `{0}`")]
    BadWrt(String),
}

/// Independent variable for forward mode: a double parameter or one slot
/// of an array parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Wrt {
    Param(String),
    Slot(String, usize),
}

impl Wrt {
    pub fn param(&self) -> &str {
        match self {
            Wrt::Param(p) | Wrt::Slot(p, _) => p,
        }
    }
}

impl fmt::Display for Wrt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wrt::Param(p) => f.write_str(p),
            Wrt::Slot(p, k) => write!(f, "{p}[{k}]"),
        }
    }
}

impl FromStr for Wrt {
    type Err = SourceError;

    /// `x` or `p[3]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SourceError::BadWrt(s.to_string());
        let s = s.trim();
        let ident = |n: &str| {
            let mut cs = n.chars();
            matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
                && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
        };
        match s.split_once('[') {
            None if ident(s) => Ok(Wrt::Param(s.to_string())),
            Some((name, rest)) if ident(name.trim()) => {
                let idx = rest.strip_suffix(']').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
                Ok(Wrt::Slot(name.trim().to_string(), idx))
            }
            _ => Err(bad()),
        }
    }
}

/// Parse `src`, reject structurally invalid programs and return the named
/// function together with the whole program.
pub(crate) fn load(src: &str, fname: &str) -> Result<(Program, FuncDef), SourceError> {
    let program = crate::parser::parse(src)?;
    let diags = crate::validate::validate(&program);
    if !diags.is_empty() {
        return Err(SourceError::Invalid(diags));
    }
    let f = program.function(fname).ok_or_else(|| SourceError::UnknownFunction(fname.to_string()))?.clone();
    Ok((program, f))
}

/// Rejects input the transforms cannot handle: reserved `_` names and the
/// tape machinery that only generated code may use.
pub(crate) fn check_source(f: &FuncDef) -> Result<(), AdError> {
    if f.ret != Type::Double {
        return Err(AdError::NonScalarOutput(f.name.clone()));
    }
    let reserved = |n: &str| n.starts_with('_');
    for p in &f.params {
        if reserved(&p.name) {
            return unsupported(format!("reserved identifier `{}`", p.name));
        }
    }
    let mut err = None;
    walk_body(&f.body, &mut |s| {
        if err.is_some() {
            return;
        }
        match s {
            Stmt::Decl { name, ty, .. } if ty.is_tape() => err = Some(format!("tape declaration `{name}`")),
            Stmt::Decl { name, .. } | Stmt::For { counter: name, .. } if reserved(name) => {
                err = Some(format!("reserved identifier `{name}`"))
            }
            Stmt::Replay { .. } => err = Some("replay loop".into()),
            Stmt::Expr(_) => err = Some("expression statement".into()),
            _ => {}
        }
        for e in s.exprs() {
            e.walk(&mut |n| match &n.kind {
                ExprKind::Call { callee: Callee::Tape(op), .. } => err = Some(format!("`{}` call", op.name())),
                ExprKind::Var(v) if reserved(v) => err = Some(format!("reserved identifier `{v}`")),
                _ => {}
            });
        }
    });
    match err {
        Some(e) => unsupported(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrt_syntax() {
        assert_eq!("x".parse::<Wrt>().unwrap(), Wrt::Param("x".into()));
        assert_eq!(" p[ 2 ]".parse::<Wrt>().unwrap(), Wrt::Slot("p".into(), 2));
        assert!("p[".parse::<Wrt>().is_err());
        assert!("p[-1]".parse::<Wrt>().is_err());
        assert!("1x".parse::<Wrt>().is_err());
        assert_eq!(Wrt::Slot("p".into(), 4).to_string(), "p[4]");
    }

    #[test]
    fn reserved_names_and_tapes_are_rejected() {
        let p = crate::parser::parse("double f(double _x) { return _x; }").unwrap();
        assert!(check_source(&p.functions[0]).is_err());
        let p = crate::parser::parse("double f(double x) { tape<int> t; push(t, 1); return x; }").unwrap();
        assert!(check_source(&p.functions[0]).is_err());
    }
}
