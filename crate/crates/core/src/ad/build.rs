//! Expression constructors that fold the trivial cases, keeping generated
//! code close to what one would write by hand.

use crate::ast::*;

pub(crate) fn is_one(e: &Expr) -> bool {
    matches!(e.as_literal(), Some(l) if l.as_f64() == 1.0)
}

pub(crate) fn strip_neg(e: &Expr) -> Option<&Expr> {
    match &e.kind {
        ExprKind::Unary { op: UnaryOp::Neg, operand } => Some(operand),
        _ => None,
    }
}

pub(crate) fn neg(e: Expr) -> Expr {
    if let Some(inner) = strip_neg(&e) {
        return inner.clone();
    }
    match e.kind {
        ExprKind::Literal(Literal::Double(v)) => Expr::double(-v),
        ExprKind::Literal(Literal::Int(v)) if v != i64::MIN => Expr::int(-v),
        _ => Expr::negate(e),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match strip_neg(&b) {
        Some(x) => Expr::binary(BinaryOp::Sub, a, x.clone()),
        None => Expr::binary(BinaryOp::Add, a, b),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match strip_neg(&b) {
        Some(x) => Expr::binary(BinaryOp::Add, a, x.clone()),
        None => Expr::binary(BinaryOp::Sub, a, b),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    if is_one(&a) && b.ty == Type::Double {
        return b;
    }
    if is_one(&b) && a.ty == Type::Double {
        return a;
    }
    if let Some(x) = strip_neg(&a) {
        return neg(mul(x.clone(), b));
    }
    if let Some(x) = strip_neg(&b) {
        return neg(mul(a, x.clone()));
    }
    Expr::binary(BinaryOp::Mul, a, b)
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    if is_one(&b) && a.ty == Type::Double {
        return a;
    }
    if let Some(x) = strip_neg(&a) {
        return neg(div(x.clone(), b));
    }
    Expr::binary(BinaryOp::Div, a, b)
}

/// `b - 1`, computed directly when `b` is a literal.
pub(crate) fn minus_one(b: &Expr) -> Expr {
    match b.as_literal() {
        Some(Literal::Int(v)) => Expr::int(v - 1),
        Some(Literal::Double(v)) => Expr::double(v - 1.0),
        None => Expr::binary(BinaryOp::Sub, b.clone(), Expr::int(1)),
    }
}

/// Sum of optional terms; `None` stands for zero.
pub(crate) fn oadd(a: Option<Expr>, b: Option<Expr>) -> Option<Expr> {
    match (a, b) {
        (Some(a), Some(b)) => Some(add(a, b)),
        (a, None) => a,
        (None, b) => b,
    }
}

pub(crate) fn osub(a: Option<Expr>, b: Option<Expr>) -> Option<Expr> {
    match (a, b) {
        (Some(a), Some(b)) => Some(sub(a, b)),
        (a, None) => a,
        (None, b) => b.map(neg),
    }
}
