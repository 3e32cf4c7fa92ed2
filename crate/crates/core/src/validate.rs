//! Structural checks over a [`Program`] that the parser does not enforce.

use std::collections::HashSet;
use std::fmt;

use crate::ast::*;
use crate::parser::SourceMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagKind {
    DuplicateParam(String),
    DefaultNotTrailing(String),
    DuplicateFunction(String),
    UnknownFunction(String),
    /// Call to a function defined later in the program, or to itself.
    ForwardReference(String),
    CallArity { callee: String, expected_min: usize, expected_max: usize, got: usize },
    CallArgType { callee: String, index: usize },
    CounterReassigned(String),
    UnreachableCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub function: String,
    pub kind: DiagKind,
}

impl Diagnostic {
    pub fn message(&self) -> String {
        match &self.kind {
            DiagKind::DuplicateParam(n) => format!("duplicate parameter `{n}`"),
            DiagKind::DefaultNotTrailing(n) => {
                format!("parameter `{n}` without a default follows a defaulted parameter")
            }
            DiagKind::DuplicateFunction(n) => format!("function `{n}` is defined more than once"),
            DiagKind::UnknownFunction(n) => format!("call to undefined function `{n}`"),
            DiagKind::ForwardReference(n) => {
                format!("call to `{n}`, which is not defined before this function")
            }
            DiagKind::CallArity { callee, expected_min, expected_max, got } => {
                if expected_min == expected_max {
                    format!("`{callee}` takes {expected_max} argument(s), got {got}")
                } else {
                    format!("`{callee}` takes {expected_min} to {expected_max} arguments, got {got}")
                }
            }
            DiagKind::CallArgType { callee, index } => {
                format!("argument {} of `{callee}` has the wrong type", index + 1)
            }
            DiagKind::CounterReassigned(n) => format!("loop counter `{n}` is assigned inside its loop"),
            DiagKind::UnreachableCode => "statement after `return` is unreachable".to_string(),
        }
    }

    /// `file:line:col: message`, positioned at the enclosing function.
    pub fn render(&self, file: &str, program: &Program, map: &SourceMap) -> String {
        let pos = program
            .function_index(&self.function)
            .and_then(|i| map.functions.get(i).copied())
            .unwrap_or_default();
        format!("{file}:{}:{}: {} (in `{}`)", pos.line.max(1), pos.col.max(1), self.message(), self.function)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.function, self.message())
    }
}

pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen = HashSet::new();
    for (idx, f) in program.functions.iter().enumerate() {
        let mut push = |kind| diags.push(Diagnostic { function: f.name.clone(), kind });
        if !seen.insert(f.name.as_str()) {
            push(DiagKind::DuplicateFunction(f.name.clone()));
        }
        let mut names = HashSet::new();
        let mut defaulted = false;
        for p in &f.params {
            if !names.insert(p.name.as_str()) {
                push(DiagKind::DuplicateParam(p.name.clone()));
            }
            if p.default.is_some() {
                defaulted = true;
            } else if defaulted {
                push(DiagKind::DefaultNotTrailing(p.name.clone()));
            }
        }
        check_body(&f.body, program, idx, &mut Vec::new(), &mut push);
    }
    diags
}

fn check_body(
    body: &[Stmt],
    program: &Program,
    idx: usize,
    counters: &mut Vec<String>,
    push: &mut dyn FnMut(DiagKind),
) {
    let mut returned = false;
    for s in body {
        if returned {
            push(DiagKind::UnreachableCode);
            break;
        }
        for e in s.exprs() {
            check_calls(e, program, idx, push);
        }
        match s {
            Stmt::Assign { target, .. } | Stmt::CompoundAssign { target, .. } => {
                if let LValue::Var(n) = target {
                    if counters.contains(n) {
                        push(DiagKind::CounterReassigned(n.clone()));
                    }
                }
            }
            Stmt::For { counter, body, .. } => {
                counters.push(counter.clone());
                check_body(body, program, idx, counters, push);
                counters.pop();
            }
            Stmt::Replay { body, .. } | Stmt::Block(body) => {
                check_body(body, program, idx, counters, push)
            }
            Stmt::If { then_body, else_body, .. } => {
                check_body(then_body, program, idx, counters, push);
                if let Some(e) = else_body {
                    check_body(e, program, idx, counters, push);
                }
            }
            _ => {}
        }
        returned = match s {
            Stmt::Return(_) => true,
            Stmt::Block(b) => crate::parser::always_returns(b),
            Stmt::If { .. } => crate::parser::always_returns(std::slice::from_ref(s)),
            _ => false,
        };
    }
}

fn check_calls(e: &Expr, program: &Program, idx: usize, push: &mut dyn FnMut(DiagKind)) {
    e.walk(&mut |node| {
        let ExprKind::Call { callee: Callee::User(name), args } = &node.kind else { return };
        let Some(target) = program.function_index(name) else {
            push(DiagKind::UnknownFunction(name.clone()));
            return;
        };
        if target >= idx {
            push(DiagKind::ForwardReference(name.clone()));
            return;
        }
        let f = &program.functions[target];
        let max = f.params.len();
        let min = f.params.iter().take_while(|p| p.default.is_none()).count();
        if args.len() < min || args.len() > max {
            push(DiagKind::CallArity { callee: name.clone(), expected_min: min, expected_max: max, got: args.len() });
            return;
        }
        for (i, (a, p)) in args.iter().zip(&f.params).enumerate() {
            let ok = match p.ty {
                Type::Double => a.ty.is_numeric(),
                Type::Int => a.ty == Type::Int,
                Type::DoubleArray => a.ty == Type::DoubleArray && matches!(a.kind, ExprKind::Var(_)),
                _ => false,
            };
            if !ok {
                push(DiagKind::CallArgType { callee: name.clone(), index: i });
            }
        }
    });
}
