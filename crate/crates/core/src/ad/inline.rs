//! Pre-passes run before differentiation: inlining of user calls and
//! normalization of early returns.

use std::collections::HashMap;

use crate::ad::analysis::{contains_return, contains_user_call};
use crate::ad::{unsupported, AdError};
use crate::ast::*;

const MAX_INLINE_DEPTH: usize = 64;

/// Rewrite `body` so every `return` is the last statement of its block and
/// sits either at the end of the body or at the end of a branch of a final
/// `if`. Code following an `if` that may return is copied into both
/// branches. Returns inside loops are rejected.
pub(crate) fn tail_form(body: Vec<Stmt>) -> Result<Vec<Stmt>, AdError> {
    let mut out = Vec::new();
    let mut rest = body.into_iter();
    while let Some(s) = rest.next() {
        match s {
            Stmt::Return(_) => {
                out.push(s);
                return Ok(out);
            }
            Stmt::If { cond, then_body, else_body } if contains_return(&then_body) || else_body.as_deref().is_some_and(contains_return) => {
                let tail: Vec<Stmt> = rest.collect();
                let mut t = then_body;
                t.extend(tail.iter().cloned());
                let mut e = else_body.unwrap_or_default();
                e.extend(tail);
                out.push(Stmt::If { cond, then_body: tail_form(t)?, else_body: Some(tail_form(e)?) });
                return Ok(out);
            }
            Stmt::Block(b) if contains_return(&b) => {
                let mut merged = b;
                merged.extend(rest);
                out.extend(tail_form(merged)?);
                return Ok(out);
            }
            Stmt::For { .. } | Stmt::Replay { .. } if contains_return(std::slice::from_ref(&s)) => {
                return unsupported("return inside a loop");
            }
            s => out.push(s),
        }
    }
    Ok(out)
}

/// Replace each `return e` of a tail-form body by `target = e`.
pub(crate) fn returns_to_assign(body: &mut [Stmt], target: &str) {
    for s in body {
        match s {
            Stmt::Return(e) => *s = Stmt::assign(target, e.clone()),
            Stmt::If { then_body, else_body, .. } => {
                returns_to_assign(then_body, target);
                if let Some(e) = else_body {
                    returns_to_assign(e, target);
                }
            }
            Stmt::Block(b) => returns_to_assign(b, target),
            _ => {}
        }
    }
}

/// Expand every call to a user function in `f` into straight code, using
/// `context` to resolve callees.
pub(crate) fn inline_calls(f: &FuncDef, context: &[FuncDef]) -> Result<FuncDef, AdError> {
    let mut inl = Inliner { context, next: 0, depth: 0 };
    let body = inl.block(&f.body)?;
    Ok(FuncDef { body, ..f.clone() })
}

struct Inliner<'a> {
    context: &'a [FuncDef],
    next: usize,
    depth: usize,
}

impl Inliner<'_> {
    fn block(&mut self, body: &[Stmt]) -> Result<Vec<Stmt>, AdError> {
        let mut out = Vec::new();
        for s in body {
            let mut pre = Vec::new();
            let s = match s {
                Stmt::For { counter, start, cond, body } => {
                    if contains_user_call(cond) {
                        return unsupported("function call in a loop condition");
                    }
                    Stmt::For { counter: counter.clone(), start: self.expr(start, &mut pre)?, cond: cond.clone(), body: self.block(body)? }
                }
                Stmt::Replay { counter, body } => Stmt::Replay { counter: counter.clone(), body: self.block(body)? },
                Stmt::If { cond, then_body, else_body } => Stmt::If {
                    cond: self.expr(cond, &mut pre)?,
                    then_body: self.block(then_body)?,
                    else_body: else_body.as_ref().map(|b| self.block(b)).transpose()?,
                },
                Stmt::Block(b) => Stmt::Block(self.block(b)?),
                Stmt::Decl { name, ty, init } => Stmt::Decl {
                    name: name.clone(),
                    ty: *ty,
                    init: init.as_ref().map(|e| self.expr(e, &mut pre)).transpose()?,
                },
                Stmt::Assign { target, value } => {
                    let value = self.expr(value, &mut pre)?;
                    Stmt::Assign { target: self.lvalue(target, &mut pre)?, value }
                }
                Stmt::CompoundAssign { op, target, value } => {
                    let value = self.expr(value, &mut pre)?;
                    Stmt::CompoundAssign { op: *op, target: self.lvalue(target, &mut pre)?, value }
                }
                Stmt::Return(e) => Stmt::Return(self.expr(e, &mut pre)?),
                Stmt::Expr(e) => Stmt::Expr(self.expr(e, &mut pre)?),
            };
            out.extend(pre);
            out.push(s);
        }
        Ok(out)
    }

    fn lvalue(&mut self, lv: &LValue, pre: &mut Vec<Stmt>) -> Result<LValue, AdError> {
        Ok(match lv {
            LValue::Var(_) => lv.clone(),
            LValue::Index { array, index } => LValue::Index { array: array.clone(), index: self.expr(index, pre)? },
        })
    }

    fn expr(&mut self, e: &Expr, pre: &mut Vec<Stmt>) -> Result<Expr, AdError> {
        if !contains_user_call(e) {
            return Ok(e.clone());
        }
        let kind = match &e.kind {
            ExprKind::Index { array, index } => ExprKind::Index { array: array.clone(), index: Box::new(self.expr(index, pre)?) },
            ExprKind::Unary { op, operand } => ExprKind::Unary { op: *op, operand: Box::new(self.expr(operand, pre)?) },
            ExprKind::Binary { op, lhs, rhs } => ExprKind::Binary {
                op: *op,
                lhs: Box::new(self.expr(lhs, pre)?),
                rhs: Box::new(self.expr(rhs, pre)?),
            },
            ExprKind::Call { callee, args } => {
                let args = args.iter().map(|a| self.expr(a, pre)).collect::<Result<Vec<_>, _>>()?;
                match callee {
                    Callee::User(name) => return self.expand(name, args, pre),
                    _ => ExprKind::Call { callee: callee.clone(), args },
                }
            }
            k => k.clone(),
        };
        Ok(Expr { kind, ty: e.ty })
    }

    fn expand(&mut self, name: &str, args: Vec<Expr>, pre: &mut Vec<Stmt>) -> Result<Expr, AdError> {
        let Some(callee) = self.context.iter().find(|f| f.name == name) else {
            return unsupported(format!("call to unknown function `{name}`"));
        };
        if self.depth >= MAX_INLINE_DEPTH {
            return unsupported(format!("recursive call to `{name}`"));
        }
        if args.len() > callee.params.len() {
            return unsupported(format!("call to `{name}` with too many arguments"));
        }
        let prefix = format!("_{name}{}_", self.next);
        self.next += 1;
        let mut map = HashMap::new();
        for (i, p) in callee.params.iter().enumerate() {
            let arg = match (args.get(i), p.default) {
                (Some(a), _) => a.clone(),
                (None, Some(l)) => Expr { kind: ExprKind::Literal(l), ty: l.ty() },
                (None, None) => return unsupported(format!("call to `{name}` with too few arguments")),
            };
            if p.ty == Type::DoubleArray {
                let ExprKind::Var(a) = &arg.kind else {
                    return unsupported(format!("array argument to `{name}` is not a variable"));
                };
                map.insert(p.name.clone(), a.clone());
            } else {
                let local = format!("{prefix}{}", p.name);
                pre.push(Stmt::decl(&local, p.ty, Some(arg)));
                map.insert(p.name.clone(), local);
            }
        }
        walk_body(&callee.body, &mut |s| match s {
            Stmt::Decl { name, .. } | Stmt::For { counter: name, .. } => {
                map.insert(name.clone(), format!("{prefix}{name}"));
            }
            _ => {}
        });
        let body: Vec<Stmt> = callee.body.iter().map(|s| rename_stmt(s, &map)).collect();
        let mut body = tail_form(body)?;
        let ret = format!("{prefix}ret");
        match body.as_slice() {
            [Stmt::Return(e)] => {
                let e = e.clone();
                body = vec![Stmt::decl(&ret, Type::Double, Some(e))];
            }
            _ => {
                returns_to_assign(&mut body, &ret);
                body.insert(0, Stmt::decl(&ret, Type::Double, None));
            }
        }
        self.depth += 1;
        let body = self.block(&body);
        self.depth -= 1;
        pre.extend(body?);
        Ok(Expr::var(ret, Type::Double))
    }
}

fn rename(n: &str, map: &HashMap<String, String>) -> String {
    map.get(n).cloned().unwrap_or_else(|| n.to_string())
}

pub(crate) fn rename_expr(e: &Expr, map: &HashMap<String, String>) -> Expr {
    let kind = match &e.kind {
        ExprKind::Var(n) => ExprKind::Var(rename(n, map)),
        ExprKind::Index { array, index } => ExprKind::Index { array: rename(array, map), index: Box::new(rename_expr(index, map)) },
        ExprKind::Unary { op, operand } => ExprKind::Unary { op: *op, operand: Box::new(rename_expr(operand, map)) },
        ExprKind::Binary { op, lhs, rhs } => ExprKind::Binary {
            op: *op,
            lhs: Box::new(rename_expr(lhs, map)),
            rhs: Box::new(rename_expr(rhs, map)),
        },
        ExprKind::Call { callee, args } => {
            ExprKind::Call { callee: callee.clone(), args: args.iter().map(|a| rename_expr(a, map)).collect() }
        }
        k => k.clone(),
    };
    Expr { kind, ty: e.ty }
}

fn rename_lvalue(lv: &LValue, map: &HashMap<String, String>) -> LValue {
    match lv {
        LValue::Var(n) => LValue::Var(rename(n, map)),
        LValue::Index { array, index } => LValue::Index { array: rename(array, map), index: rename_expr(index, map) },
    }
}

pub(crate) fn rename_stmt(s: &Stmt, map: &HashMap<String, String>) -> Stmt {
    let body = |b: &[Stmt]| b.iter().map(|s| rename_stmt(s, map)).collect::<Vec<_>>();
    match s {
        Stmt::Decl { name, ty, init } => {
            Stmt::Decl { name: rename(name, map), ty: *ty, init: init.as_ref().map(|e| rename_expr(e, map)) }
        }
        Stmt::Assign { target, value } => Stmt::Assign { target: rename_lvalue(target, map), value: rename_expr(value, map) },
        Stmt::CompoundAssign { op, target, value } => {
            Stmt::CompoundAssign { op: *op, target: rename_lvalue(target, map), value: rename_expr(value, map) }
        }
        Stmt::For { counter, start, cond, body: b } => Stmt::For {
            counter: rename(counter, map),
            start: rename_expr(start, map),
            cond: rename_expr(cond, map),
            body: body(b),
        },
        Stmt::Replay { counter, body: b } => Stmt::Replay { counter: rename(counter, map), body: body(b) },
        Stmt::If { cond, then_body, else_body } => Stmt::If {
            cond: rename_expr(cond, map),
            then_body: body(then_body),
            else_body: else_body.as_deref().map(body),
        },
        Stmt::Return(e) => Stmt::Return(rename_expr(e, map)),
        Stmt::Block(b) => Stmt::Block(body(b)),
        Stmt::Expr(e) => Stmt::Expr(rename_expr(e, map)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{call, Value};
    use crate::parser::parse;
    use crate::printer::print_function;

    fn roundtrip(f: &FuncDef) -> Program {
        parse(&print_function(f)).unwrap_or_else(|e| panic!("{e:?}\n{}", print_function(f)))
    }

    #[test]
    fn early_returns_move_into_branches() {
        let src = "double f(double x) { if (x < 0) { return -x; } double y = x * 2; return y; }";
        let p = parse(src).unwrap();
        let body = tail_form(p.functions[0].body.clone()).unwrap();
        assert_eq!(body.len(), 1);
        let Stmt::If { else_body: Some(e), .. } = &body[0] else { panic!() };
        assert_eq!(e.len(), 2);
        let g = FuncDef { body, ..p.functions[0].clone() };
        let q = roundtrip(&g);
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(call(&q, "f", &[Value::D(x)]), call(&p, "f", &[Value::D(x)]));
        }
    }

    #[test]
    fn return_in_loop_is_rejected() {
        let p = parse("double f(int n) { for (int i = 0; i < n; i++) { return 1; } return 0; }").unwrap();
        assert!(tail_form(p.functions[0].body.clone()).is_err());
    }

    #[test]
    fn inlined_calls_keep_their_value() {
        let src = "double sq(double x, double k = 2) { if (x < 0) { return pow(-x, k); } return pow(x, k); }
                   double get(double* a, int j) { return a[j]; }
                   double f(double* p, double y) {
                       double s = 0;
                       for (int i = 0; i < 3; i++) { s += sq(get(p, i)) + sq(y, 3); }
                       return s + sq(s - 1);
                   }";
        let p = parse(src).unwrap();
        let f = inline_calls(p.function("f").unwrap(), &p.functions).unwrap();
        let printed = print_function(&f);
        assert!(!printed.contains("sq("), "{printed}");
        let q = roundtrip(&f);
        let args = [Value::array(&[0.5, -1.5, 2.0]), Value::D(-0.75)];
        assert_eq!(call(&q, "f", &args), call(&p, "f", &args));
    }
}
