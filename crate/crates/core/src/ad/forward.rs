//! Forward mode: one directional derivative per generated function.

use std::collections::HashSet;

use crate::ad::analysis::{active_set, is_active};
use crate::ad::build::*;
use crate::ad::inline::inline_calls;
use crate::ad::{check_source, load, unsupported, AdError, Mode, SourceError, Wrt};
use crate::ast::*;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffRequest {
    pub func: FuncDef,
    pub wrt: Wrt,
    /// Functions that calls inside `func` may refer to.
    pub context: Vec<FuncDef>,
}

impl DiffRequest {
    pub fn new(func: FuncDef, wrt: Wrt) -> Self {
        DiffRequest { func, wrt, context: Vec::new() }
    }

    pub fn with_context(mut self, functions: &[FuncDef]) -> Self {
        self.context = functions.to_vec();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFunc {
    pub original: FuncDef,
    pub derivative: FuncDef,
    pub mode: Mode,
}

pub(crate) fn shadow(name: &str) -> String {
    format!("_d_{name}")
}

/// Name of the derivative of `f` with respect to `wrt`.
pub fn derivative_name(f: &str, wrt: &Wrt) -> String {
    match wrt {
        Wrt::Param(p) => format!("{f}_d{p}"),
        Wrt::Slot(p, k) => format!("{f}_d{p}_{k}"),
    }
}

pub fn differentiate(req: &DiffRequest) -> Result<DerivedFunc, AdError> {
    let f = &req.func;
    let param = f.param(req.wrt.param()).ok_or_else(|| AdError::UnknownParameter(req.wrt.param().to_string()))?;
    match (&req.wrt, param.ty) {
        (Wrt::Param(_), Type::Double) | (Wrt::Slot(..), Type::DoubleArray) => {}
        (Wrt::Param(p), Type::DoubleArray) => return unsupported(format!("whole array `{p}` in forward mode; pick one slot")),
        (w, ty) => return unsupported(format!("differentiation with respect to `{w}` of type {ty}")),
    }
    check_source(f)?;
    let inlined = inline_calls(f, &req.context)?;
    let active = active_set(&inlined.body, [req.wrt.param().to_string()]);
    let mut fwd = Forward { wrt: &req.wrt, active };

    let mut body = Vec::new();
    for p in &f.params {
        if p.ty != Type::Double {
            continue;
        }
        if req.wrt == Wrt::Param(p.name.clone()) {
            body.push(Stmt::decl(shadow(&p.name), Type::Double, Some(Expr::int(1))));
        } else if fwd.active.contains(&p.name) {
            body.push(Stmt::decl(shadow(&p.name), Type::Double, Some(Expr::int(0))));
        }
    }
    body.extend(fwd.block(&inlined.body)?);
    let derivative = FuncDef { name: derivative_name(&f.name, &req.wrt), params: f.params.clone(), body, ret: Type::Double };
    Ok(DerivedFunc { original: f.clone(), derivative, mode: Mode::Forward })
}

/// Parse `src`, differentiate `fname` with respect to `wrt` (`x` or `p[k]`)
/// and print the derivative.
pub fn differentiate_source(src: &str, fname: &str, wrt: &str) -> Result<String, SourceError> {
    let (program, f) = load(src, fname)?;
    let req = DiffRequest::new(f, wrt.parse()?).with_context(&program.functions);
    Ok(crate::printer::print_function(&differentiate(&req)?.derivative))
}

struct Forward<'a> {
    wrt: &'a Wrt,
    active: HashSet<String>,
}

impl Forward<'_> {
    fn block(&mut self, body: &[Stmt]) -> Result<Vec<Stmt>, AdError> {
        let mut out = Vec::new();
        for s in body {
            self.stmt(s, &mut out)?;
        }
        Ok(out)
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Stmt>) -> Result<(), AdError> {
        match s {
            Stmt::Decl { name, ty: Type::Double, init } => {
                let d = match init {
                    Some(e) => self.d(e)?,
                    None => None,
                };
                out.push(Stmt::decl(shadow(name), Type::Double, Some(d.unwrap_or_else(|| Expr::int(0)))));
            }
            Stmt::Assign { target: LValue::Var(v), value } if value.ty == Type::Double || self.active.contains(v) => {
                if self.active.contains(v) {
                    let d = self.d(value)?.unwrap_or_else(|| Expr::int(0));
                    out.push(Stmt::assign(shadow(v), d));
                }
            }
            Stmt::CompoundAssign { op, target: LValue::Var(v), value } if self.active.contains(v) => {
                let dv = Expr::var(shadow(v), Type::Double);
                let x = Expr::var(v.clone(), Type::Double);
                let de = self.d(value)?;
                match op {
                    AssignOp::Add | AssignOp::Sub => {
                        if let Some(de) = de {
                            out.push(Stmt::compound(*op, shadow(v), de));
                        }
                    }
                    AssignOp::Mul => {
                        let d = oadd(Some(mul(dv, value.clone())), de.map(|de| mul(x, de))).expect("nonzero");
                        out.push(Stmt::assign(shadow(v), d));
                    }
                    AssignOp::Div => {
                        let d = match de {
                            None => div(dv, value.clone()),
                            Some(de) => div(sub(mul(dv, value.clone()), mul(x, de)), mul(value.clone(), value.clone())),
                        };
                        out.push(Stmt::assign(shadow(v), d));
                    }
                }
            }
            Stmt::Assign { target: LValue::Index { array, .. }, value } | Stmt::CompoundAssign { target: LValue::Index { array, .. }, value, .. } => {
                if array == self.wrt.param() {
                    return unsupported(format!("assignment to the differentiation array `{array}`"));
                }
                if is_active(value, &self.active) {
                    return unsupported(format!("storing a differentiated value into array `{array}`"));
                }
            }
            Stmt::For { counter, start, cond, body } => {
                out.push(Stmt::For { counter: counter.clone(), start: start.clone(), cond: cond.clone(), body: self.block(body)? });
                return Ok(());
            }
            Stmt::If { cond, then_body, else_body } => {
                out.push(Stmt::If {
                    cond: cond.clone(),
                    then_body: self.block(then_body)?,
                    else_body: else_body.as_ref().map(|b| self.block(b)).transpose()?,
                });
                return Ok(());
            }
            Stmt::Block(b) => {
                out.push(Stmt::Block(self.block(b)?));
                return Ok(());
            }
            Stmt::Return(e) => {
                out.push(Stmt::Return(self.d(e)?.unwrap_or_else(|| Expr::double(0.0))));
                return Ok(());
            }
            Stmt::Replay { .. } | Stmt::Expr(_) => return unsupported("tape code"),
            _ => {}
        }
        out.push(s.clone());
        Ok(())
    }

    /// Derivative of `e`; `None` is an exact zero.
    fn d(&self, e: &Expr) -> Result<Option<Expr>, AdError> {
        if e.ty != Type::Double {
            return Ok(None);
        }
        Ok(match &e.kind {
            ExprKind::Literal(_) | ExprKind::Const(_) => None,
            ExprKind::Var(v) => self.active.contains(v).then(|| Expr::var(shadow(v), Type::Double)),
            ExprKind::Index { array, index } => match self.wrt {
                Wrt::Slot(p, k) if p == array => {
                    Some(Expr::binary(BinaryOp::Eq, (**index).clone(), Expr::int(*k as i64)))
                }
                _ => None,
            },
            ExprKind::Unary { operand, .. } => self.d(operand)?.map(neg),
            ExprKind::Binary { op, lhs, rhs } => {
                let (da, db) = (self.d(lhs)?, self.d(rhs)?);
                let (a, b) = ((**lhs).clone(), (**rhs).clone());
                match op {
                    BinaryOp::Add => oadd(da, db),
                    BinaryOp::Sub => osub(da, db),
                    BinaryOp::Mul => oadd(da.map(|da| mul(da, b)), db.map(|db| mul(a, db))),
                    BinaryOp::Div => match (da, db) {
                        (None, None) => None,
                        (Some(da), None) => Some(div(da, b)),
                        (da, Some(db)) => {
                            let num = osub(da.map(|da| mul(da, b.clone())), Some(mul(a, db))).expect("nonzero");
                            Some(div(num, mul(b.clone(), b)))
                        }
                    },
                    _ => None,
                }
            }
            ExprKind::Call { callee: Callee::Intrinsic(f), args } => {
                let a = args[0].clone();
                let da = self.d(&a)?;
                match f {
                    Intrinsic::Sin => da.map(|da| mul(Expr::intrinsic(Intrinsic::Cos, vec![a]), da)),
                    Intrinsic::Cos => da.map(|da| neg(mul(Expr::intrinsic(Intrinsic::Sin, vec![a]), da))),
                    Intrinsic::Exp => da.map(|da| mul(e.clone(), da)),
                    Intrinsic::Log => da.map(|da| div(da, a)),
                    Intrinsic::Sqrt => da.map(|da| div(da, mul(Expr::double(2.0), e.clone()))),
                    Intrinsic::Pow => {
                        let b = args[1].clone();
                        match self.d(&b)? {
                            None => da.map(|da| {
                                let p = Expr::intrinsic(Intrinsic::Pow, vec![a.clone(), minus_one(&b)]);
                                mul(mul(b, p), da)
                            }),
                            Some(db) => {
                                let log_a = Expr::intrinsic(Intrinsic::Log, vec![a.clone()]);
                                let inner = oadd(Some(mul(db, log_a)), da.map(|da| div(mul(b, da), a))).expect("nonzero");
                                Some(mul(e.clone(), inner))
                            }
                        }
                    }
                }
            }
            ExprKind::Call { callee, .. } => return unsupported(format!("call to `{}`", callee.name())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{call, Value};
    use crate::parser::parse;
    use crate::printer::print_function;

    fn derive(src: &str, wrt: &str, args: &[Value]) -> f64 {
        let text = differentiate_source(src, &parse(src).unwrap().functions.last().unwrap().name, wrt).unwrap();
        let p = parse(&text).unwrap_or_else(|e| panic!("{e:?}\n{text}"));
        assert!(crate::validate::validate(&p).is_empty(), "{text}");
        call(&p, &p.functions[0].name, args).unwrap()
    }

    #[test]
    fn square() {
        assert_eq!(derive("double f(double x) { return x * x; }", "x", &[Value::D(3.0)]), 6.0);
    }

    #[test]
    fn identity_and_exp() {
        for x in [-2.0, 0.0, 7.5] {
            assert_eq!(derive("double f(double x){return x;}", "x", &[Value::D(x)]), 1.0);
        }
        assert_eq!(derive("double f(double x) { return exp(x); }", "x", &[Value::D(0.0)]), 1.0);
    }

    #[test]
    fn array_slot() {
        let src = "double sum(double* p, int dim) { double r = 0.0; for (int i = 0; i < dim; i++) r += p[i]; return r; }";
        let p = Value::array(&[3.0, -1.0, 4.0, 1.0, 5.0]);
        assert_eq!(derive(src, "p[2]", &[p, Value::I(5)]), 1.0);
    }

    #[test]
    fn compound_products_and_quotients() {
        let src = "double f(double x) { double y = 2; y *= x; y *= x; y /= (x + 1); y -= sin(x); return y; }";
        let x = 0.7f64;
        let want = (2.0 * x * (x + 2.0)) / ((x + 1.0) * (x + 1.0)) - x.cos();
        let got = derive(src, "x", &[Value::D(x)]);
        assert!((got - want).abs() < 1e-14, "{got} {want}");
    }

    #[test]
    fn general_pow() {
        let src = "double f(double x) { return pow(x, x); }";
        let x = 1.3f64;
        let got = derive(src, "x", &[Value::D(x)]);
        assert!((got - x.powf(x) * (x.ln() + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn branches_and_calls() {
        let src = "double g(double t) { if (t < 0) { return -t * t; } return t * t * t; }
                   double f(double x) { return g(x) + g(2 * x); }";
        assert_eq!(derive(src, "x", &[Value::D(1.0)]), 3.0 + 24.0);
        assert_eq!(derive(src, "x", &[Value::D(-1.0)]), 2.0 + 8.0);
    }

    #[test]
    fn structure_is_preserved() {
        let src = "double f(double x, int n) { double s = 0; for (int i = 0; i < n; i++) { if (i < 2) { s += x; } else { s += x * x; } } return s; }";
        let p = parse(src).unwrap();
        let d = differentiate(&DiffRequest::new(p.functions[0].clone(), Wrt::Param("x".into()))).unwrap();
        assert_eq!(d.derivative.count_loops(), 1);
        assert_eq!(d.derivative.count_branches(), 1);
        assert_eq!(d.derivative.params, d.original.params);
        assert_eq!(d.derivative.name, "f_dx");
        let text = print_function(&d.derivative);
        assert!(text.contains("double _d_s = 0;"), "{text}");
    }

    #[test]
    fn request_errors() {
        let p = parse("double f(double x, int n, double* a) { a[0] = x; return x; }").unwrap();
        let f = p.functions[0].clone();
        let err = |w: Wrt| differentiate(&DiffRequest::new(f.clone(), w)).unwrap_err();
        assert_eq!(err(Wrt::Param("y".into())), AdError::UnknownParameter("y".into()));
        assert!(matches!(err(Wrt::Param("n".into())), AdError::UnsupportedConstruct(_)));
        assert!(matches!(err(Wrt::Param("x".into())), AdError::UnsupportedConstruct(_)));
        assert!(matches!(err(Wrt::Slot("a".into(), 0)), AdError::UnsupportedConstruct(_)));
    }
}
