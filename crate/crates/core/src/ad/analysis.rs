//! Activity analysis and small structural queries shared by both modes.

use std::collections::HashSet;

use crate::ast::*;

/// Names whose value may depend on `seeds`. Flow-insensitive fixpoint over
/// every assignment in the body, so loop-carried dependencies are covered.
/// Seeds may include array names; reads of their elements are active.
pub(crate) fn active_set(body: &[Stmt], seeds: impl IntoIterator<Item = String>) -> HashSet<String> {
    let mut active: HashSet<String> = seeds.into_iter().collect();
    loop {
        let before = active.len();
        walk_body(body, &mut |s| {
            let (name, value) = match s {
                Stmt::Decl { name, init: Some(v), .. } => (name, v),
                Stmt::Assign { target: LValue::Var(n), value } | Stmt::CompoundAssign { target: LValue::Var(n), value, .. } => {
                    (n, value)
                }
                _ => return,
            };
            if !active.contains(name) && is_active(value, &active) {
                active.insert(name.clone());
            }
        });
        if active.len() == before {
            return active;
        }
    }
}

/// Whether `e` carries a derivative. Integer-typed expressions never do.
pub(crate) fn is_active(e: &Expr, active: &HashSet<String>) -> bool {
    if e.ty != Type::Double {
        return false;
    }
    match &e.kind {
        ExprKind::Literal(_) | ExprKind::Const(_) => false,
        ExprKind::Var(v) => active.contains(v),
        ExprKind::Index { array, .. } => active.contains(array),
        ExprKind::Unary { operand, .. } => is_active(operand, active),
        ExprKind::Binary { lhs, rhs, .. } => is_active(lhs, active) || is_active(rhs, active),
        ExprKind::Call { args, .. } => args.iter().any(|a| is_active(a, active)),
    }
}

/// Every variable and array name read anywhere in `body`.
pub(crate) fn reads(body: &[Stmt]) -> HashSet<String> {
    let mut out = HashSet::new();
    walk_body(body, &mut |s| {
        for e in s.exprs() {
            out.extend(e.names().into_iter().map(str::to_string));
        }
        if let Stmt::Replay { counter, .. } = s {
            out.insert(counter.clone());
        }
    });
    out
}

/// Names that are the target of an assignment (not a declaration).
pub(crate) fn assigned(body: &[Stmt]) -> HashSet<String> {
    let mut out = HashSet::new();
    walk_body(body, &mut |s| {
        if let Stmt::Assign { target, .. } | Stmt::CompoundAssign { target, .. } = s {
            out.insert(target.name().to_string());
        }
    });
    out
}

pub(crate) fn contains_return(body: &[Stmt]) -> bool {
    let mut found = false;
    walk_body(body, &mut |s| found |= matches!(s, Stmt::Return(_)));
    found
}

pub(crate) fn contains_user_call(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |n| found |= matches!(n.kind, ExprKind::Call { callee: Callee::User(_), .. }));
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    #[test]
    fn activity_follows_loop_carried_flow() {
        let src = "double f(double x, double y, int n) {
            double a = 0; double b = 1; double c = y;
            for (int i = 0; i < n; i++) { b = a * 2; a = x; }
            int k = x < 1;
            return a + b + c + k;
        }";
        let p = parse(src).unwrap();
        let act = active_set(&p.functions[0].body, ["x".to_string()]);
        assert!(act.contains("a") && act.contains("b"));
        assert!(!act.contains("c") && !act.contains("k"));
    }
}
