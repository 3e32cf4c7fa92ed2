//! Deterministic source printer. `parse(&print(p)) == p` for every
//! well-formed program.

use std::collections::HashSet;
use std::fmt::Write;

use crate::ast::*;

const INDENT: &str = "    ";

pub fn print(program: &Program) -> String {
    let mut out = String::new();
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function_into(&mut out, f);
    }
    out
}

pub fn print_function(f: &FuncDef) -> String {
    let mut out = String::new();
    print_function_into(&mut out, f);
    out
}

fn print_function_into(out: &mut String, f: &FuncDef) {
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| match p.default {
            Some(d) => format!("{} {} = {}", p.ty, p.name, literal(d)),
            None => format!("{} {}", p.ty, p.name),
        })
        .collect();
    let _ = writeln!(out, "double {}({}) {{", f.name, params.join(", "));
    // `x++` is reserved for integers so a double `+= 1` keeps its meaning
    // visible to the reader.
    let mut ints: HashSet<&str> = f.params.iter().filter(|p| p.ty == Type::Int).map(|p| p.name.as_str()).collect();
    walk_body(&f.body, &mut |s| match s {
        Stmt::Decl { name, ty: Type::Int, .. } | Stmt::For { counter: name, .. } => {
            ints.insert(name);
        }
        _ => {}
    });
    for s in &f.body {
        stmt(out, s, 1, &ints);
    }
    out.push_str("}\n");
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn body(out: &mut String, stmts: &[Stmt], depth: usize, ints: &HashSet<&str>) {
    for s in stmts {
        stmt(out, s, depth + 1, ints);
    }
    indent(out, depth);
    out.push('}');
}

fn lvalue(lv: &LValue) -> String {
    match lv {
        LValue::Var(n) => n.clone(),
        LValue::Index { array, index } => format!("{array}[{}]", print_expr(index)),
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize, ints: &HashSet<&str>) {
    indent(out, depth);
    match s {
        Stmt::Decl { name, ty, init: Some(e) } => {
            let _ = writeln!(out, "{ty} {name} = {};", print_expr(e));
        }
        Stmt::Decl { name, ty, init: None } => {
            let _ = writeln!(out, "{ty} {name};");
        }
        Stmt::Assign { target, value } => {
            let _ = writeln!(out, "{} = {};", lvalue(target), print_expr(value));
        }
        Stmt::CompoundAssign { op, target, value } => {
            let unit = matches!(value.kind, ExprKind::Literal(Literal::Int(1)))
                && matches!(target, LValue::Var(n) if ints.contains(n.as_str()));
            match (op, unit) {
                (AssignOp::Add, true) => {
                    let _ = writeln!(out, "{}++;", lvalue(target));
                }
                (AssignOp::Sub, true) => {
                    let _ = writeln!(out, "{}--;", lvalue(target));
                }
                _ => {
                    let _ = writeln!(out, "{} {} {};", lvalue(target), op.symbol(), print_expr(value));
                }
            }
        }
        Stmt::For { counter, start, cond, body: b } => {
            let _ = writeln!(
                out,
                "for (int {counter} = {}; {}; {counter}++) {{",
                print_expr(start),
                print_expr(cond)
            );
            body(out, b, depth, ints);
            out.push('\n');
        }
        Stmt::Replay { counter, body: b } => {
            let _ = writeln!(out, "for (; {counter}; {counter}--) {{");
            body(out, b, depth, ints);
            out.push('\n');
        }
        Stmt::If { cond, then_body, else_body } => {
            print_if(out, cond, then_body, else_body.as_deref(), depth, ints);
            out.push('\n');
        }
        Stmt::Return(e) => {
            let _ = writeln!(out, "return {};", print_expr(e));
        }
        Stmt::Block(b) => {
            out.push_str("{\n");
            body(out, b, depth, ints);
            out.push('\n');
        }
        Stmt::Expr(e) => {
            let _ = writeln!(out, "{};", print_expr(e));
        }
    }
}

fn print_if(out: &mut String, cond: &Expr, then_body: &[Stmt], else_body: Option<&[Stmt]>, depth: usize, ints: &HashSet<&str>) {
    let _ = writeln!(out, "if ({}) {{", print_expr(cond));
    body(out, then_body, depth, ints);
    match else_body {
        None => {}
        Some([Stmt::If { cond, then_body, else_body }]) => {
            out.push_str(" else ");
            print_if(out, cond, then_body, else_body.as_deref(), depth, ints);
        }
        Some(e) => {
            out.push_str(" else {\n");
            body(out, e, depth, ints);
        }
    }
}

pub fn literal(l: Literal) -> String {
    match l {
        Literal::Int(v) => v.to_string(),
        Literal::Double(v) if v.is_infinite() => {
            if v > 0.0 { "1e999".into() } else { "-1e999".into() }
        }
        Literal::Double(v) => format!("{v:?}"),
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e);
    s
}

fn expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Literal(l) => out.push_str(&literal(*l)),
        ExprKind::Const(c) => out.push_str(c.name()),
        ExprKind::Var(n) => out.push_str(n),
        ExprKind::Index { array, index } => {
            out.push_str(array);
            out.push('[');
            expr(out, index);
            out.push(']');
        }
        ExprKind::Unary { op: UnaryOp::Neg, operand } => {
            out.push('-');
            let wrap = matches!(
                operand.kind,
                ExprKind::Binary { .. } | ExprKind::Unary { .. } | ExprKind::Literal(_)
            );
            if wrap {
                out.push('(');
                expr(out, operand);
                out.push(')');
            } else {
                expr(out, operand);
            }
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let wrap_l = matches!(&lhs.kind, ExprKind::Binary { op: l, .. } if l.precedence() < prec);
            let wrap_r = matches!(&rhs.kind, ExprKind::Binary { op: r, .. } if r.precedence() <= prec);
            operand(out, lhs, wrap_l);
            let _ = write!(out, " {} ", op.symbol());
            operand(out, rhs, wrap_r);
        }
        ExprKind::Call { callee, args } => {
            out.push_str(callee.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, a);
            }
            out.push(')');
        }
    }
}

fn operand(out: &mut String, e: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
        expr(out, e);
        out.push(')');
    } else {
        expr(out, e);
    }
}
