//! Lowers typed ASTs into a slot-resolved, type-split form so the hot
//! evaluation loop never looks up names or matches on dynamic values.

use std::collections::HashMap;

use crate::ast::*;
use crate::eval::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Arith {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone)]
pub(crate) enum DExpr {
    Lit(f64),
    Var(u32),
    Index(u32, Box<IExpr>),
    Neg(Box<DExpr>),
    Bin(Arith, Box<DExpr>, Box<DExpr>),
    FromInt(Box<IExpr>),
    Unary(Intrinsic, Box<DExpr>),
    Pow(Box<DExpr>, Box<DExpr>),
    Call(u32, Vec<Arg>),
    Push(u32, Box<DExpr>),
    Pop(u32),
}

#[derive(Debug, Clone)]
pub(crate) enum IExpr {
    Lit(i64),
    Var(u32),
    Neg(Box<IExpr>),
    Bin(Arith, Box<IExpr>, Box<IExpr>),
    CmpI(Cmp, Box<IExpr>, Box<IExpr>),
    CmpD(Cmp, Box<DExpr>, Box<DExpr>),
    Push(u32, Box<IExpr>),
    Pop(u32),
}

#[derive(Debug, Clone)]
pub(crate) enum Arg {
    D(DExpr),
    I(IExpr),
    A(u32),
}

#[derive(Debug, Clone)]
pub(crate) enum CStmt {
    SetD(u32, DExpr),
    SetI(u32, IExpr),
    SetElem(u32, IExpr, DExpr),
    UpdD(Arith, u32, DExpr),
    UpdI(Arith, u32, IExpr),
    UpdElem(Arith, u32, IExpr, DExpr),
    ResetTapeI(u32),
    ResetTapeD(u32),
    For { counter: u32, start: IExpr, cond: IExpr, body: Vec<CStmt> },
    Replay { counter: u32, body: Vec<CStmt> },
    If { cond: IExpr, then_body: Vec<CStmt>, else_body: Vec<CStmt> },
    Return(DExpr),
    Block(Vec<CStmt>),
    EvalD(DExpr),
    EvalI(IExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    D(u32),
    I(u32),
    A(u32),
    TI(u32),
    TD(u32),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Layout {
    pub doubles: u32,
    pub ints: u32,
    pub arrays: u32,
    pub int_tapes: u32,
    pub double_tapes: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct CFunc {
    pub name: String,
    pub params: Vec<(Param, Slot)>,
    pub layout: Layout,
    pub array_names: Vec<String>,
    pub body: Vec<CStmt>,
}

pub(crate) fn compile_program(program: &Program) -> Result<Vec<CFunc>, EvalError> {
    let index: HashMap<&str, usize> = program
        .functions
        .iter()
        .enumerate()
        .rev()
        .map(|(i, f)| (f.name.as_str(), i))
        .collect();
    program
        .functions
        .iter()
        .map(|f| Lower::new(program, &index).function(f))
        .collect()
}

struct Lower<'a> {
    program: &'a Program,
    index: &'a HashMap<&'a str, usize>,
    scopes: Vec<HashMap<String, Slot>>,
    layout: Layout,
    array_names: Vec<String>,
}

impl<'a> Lower<'a> {
    fn new(program: &'a Program, index: &'a HashMap<&'a str, usize>) -> Self {
        Lower { program, index, scopes: Vec::new(), layout: Layout::default(), array_names: Vec::new() }
    }

    fn alloc(&mut self, name: &str, ty: Type) -> Slot {
        let l = &mut self.layout;
        let slot = match ty {
            Type::Double => {
                l.doubles += 1;
                Slot::D(l.doubles - 1)
            }
            Type::Int => {
                l.ints += 1;
                Slot::I(l.ints - 1)
            }
            Type::DoubleArray => {
                l.arrays += 1;
                self.array_names.push(name.to_string());
                Slot::A(l.arrays - 1)
            }
            Type::IntTape => {
                l.int_tapes += 1;
                Slot::TI(l.int_tapes - 1)
            }
            Type::DoubleTape => {
                l.double_tapes += 1;
                Slot::TD(l.double_tapes - 1)
            }
        };
        self.scopes.last_mut().expect("scope").insert(name.to_string(), slot);
        slot
    }

    fn lookup(&self, name: &str) -> Result<Slot, EvalError> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .ok_or_else(|| EvalError::UnboundName(name.to_string()))
    }

    fn function(mut self, f: &FuncDef) -> Result<CFunc, EvalError> {
        self.scopes.push(HashMap::new());
        let mut params = Vec::new();
        for p in &f.params {
            let slot = self.alloc(&p.name, p.ty);
            params.push((p.clone(), slot));
        }
        let body = self.block(&f.body)?;
        Ok(CFunc { name: f.name.clone(), params, layout: self.layout, array_names: self.array_names, body })
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Vec<CStmt>, EvalError> {
        self.scopes.push(HashMap::new());
        let r = stmts.iter().map(|s| self.stmt(s)).collect();
        self.scopes.pop();
        r
    }

    fn stmt(&mut self, s: &Stmt) -> Result<CStmt, EvalError> {
        Ok(match s {
            Stmt::Decl { name, ty, init } => {
                let value = match (ty, init) {
                    (Type::Double, Some(e)) => Some(Arg::D(self.d(e)?)),
                    (Type::Int, Some(e)) => Some(Arg::I(self.i(e)?)),
                    _ => None,
                };
                match (self.alloc(name, *ty), value) {
                    (Slot::D(s), Some(Arg::D(e))) => CStmt::SetD(s, e),
                    (Slot::D(s), _) => CStmt::SetD(s, DExpr::Lit(0.0)),
                    (Slot::I(s), Some(Arg::I(e))) => CStmt::SetI(s, e),
                    (Slot::I(s), _) => CStmt::SetI(s, IExpr::Lit(0)),
                    (Slot::TI(s), _) => CStmt::ResetTapeI(s),
                    (Slot::TD(s), _) => CStmt::ResetTapeD(s),
                    (Slot::A(_), _) => {
                        return Err(EvalError::TypeMismatch(format!("local array `{name}` is not supported")))
                    }
                }
            }
            Stmt::Assign { target, value } => match self.target(target)? {
                Target::D(s) => CStmt::SetD(s, self.d(value)?),
                Target::I(s) => CStmt::SetI(s, self.i(value)?),
                Target::Elem(a, idx) => CStmt::SetElem(a, idx, self.d(value)?),
            },
            Stmt::CompoundAssign { op, target, value } => {
                let op = arith(op.binary());
                match self.target(target)? {
                    Target::D(s) => CStmt::UpdD(op, s, self.d(value)?),
                    Target::I(s) => CStmt::UpdI(op, s, self.i(value)?),
                    Target::Elem(a, idx) => CStmt::UpdElem(op, a, idx, self.d(value)?),
                }
            }
            Stmt::For { counter, start, cond, body } => {
                let start = self.i(start)?;
                self.scopes.push(HashMap::new());
                let Slot::I(c) = self.alloc(counter, Type::Int) else { unreachable!() };
                let cond = self.i(cond);
                let body = self.block(body);
                self.scopes.pop();
                CStmt::For { counter: c, start, cond: cond?, body: body? }
            }
            Stmt::Replay { counter, body } => match self.lookup(counter)? {
                Slot::I(c) => CStmt::Replay { counter: c, body: self.block(body)? },
                _ => return Err(EvalError::TypeMismatch(format!("replay counter `{counter}` is not int"))),
            },
            Stmt::If { cond, then_body, else_body } => CStmt::If {
                cond: self.i(cond)?,
                then_body: self.block(then_body)?,
                else_body: match else_body {
                    Some(b) => self.block(b)?,
                    None => Vec::new(),
                },
            },
            Stmt::Return(e) => CStmt::Return(self.d(e)?),
            Stmt::Block(b) => CStmt::Block(self.block(b)?),
            Stmt::Expr(e) => match e.ty {
                Type::Int => CStmt::EvalI(self.i(e)?),
                _ => CStmt::EvalD(self.d(e)?),
            },
        })
    }

    fn target(&mut self, lv: &LValue) -> Result<Target, EvalError> {
        match lv {
            LValue::Var(n) => match self.lookup(n)? {
                Slot::D(s) => Ok(Target::D(s)),
                Slot::I(s) => Ok(Target::I(s)),
                _ => Err(EvalError::TypeMismatch(format!("cannot assign to `{n}`"))),
            },
            LValue::Index { array, index } => match self.lookup(array)? {
                Slot::A(a) => Ok(Target::Elem(a, self.i(index)?)),
                _ => Err(EvalError::TypeMismatch(format!("`{array}` is not an array"))),
            },
        }
    }

    fn tape(&self, args: &[Expr]) -> Result<Slot, EvalError> {
        match args.first().map(|a| &a.kind) {
            Some(ExprKind::Var(n)) => self.lookup(n),
            _ => Err(EvalError::TypeMismatch("tape operation without a tape".into())),
        }
    }

    /// Lower an expression in double context (ints are promoted).
    fn d(&mut self, e: &Expr) -> Result<DExpr, EvalError> {
        if e.ty == Type::Int {
            return Ok(match &e.kind {
                ExprKind::Literal(Literal::Int(v)) => DExpr::Lit(*v as f64),
                _ => DExpr::FromInt(Box::new(self.i(e)?)),
            });
        }
        Ok(match &e.kind {
            ExprKind::Literal(l) => DExpr::Lit(l.as_f64()),
            ExprKind::Const(c) => DExpr::Lit(c.value()),
            ExprKind::Var(n) => match self.lookup(n)? {
                Slot::D(s) => DExpr::Var(s),
                Slot::I(s) => DExpr::FromInt(Box::new(IExpr::Var(s))),
                _ => return Err(EvalError::TypeMismatch(format!("`{n}` is not a scalar"))),
            },
            ExprKind::Index { array, index } => match self.lookup(array)? {
                Slot::A(a) => DExpr::Index(a, Box::new(self.i(index)?)),
                _ => return Err(EvalError::TypeMismatch(format!("`{array}` is not an array"))),
            },
            ExprKind::Unary { operand, .. } => DExpr::Neg(Box::new(self.d(operand)?)),
            ExprKind::Binary { op, lhs, rhs } => {
                if op.is_comparison() {
                    return Ok(DExpr::FromInt(Box::new(self.i(e)?)));
                }
                DExpr::Bin(arith(*op), Box::new(self.d(lhs)?), Box::new(self.d(rhs)?))
            }
            ExprKind::Call { callee, args } => match callee {
                Callee::Intrinsic(Intrinsic::Pow) => {
                    DExpr::Pow(Box::new(self.d(&args[0])?), Box::new(self.d(&args[1])?))
                }
                Callee::Intrinsic(f) => DExpr::Unary(*f, Box::new(self.d(&args[0])?)),
                Callee::Tape(op) => match (op, self.tape(args)?) {
                    (TapeOp::Push, Slot::TD(t)) => DExpr::Push(t, Box::new(self.d(&args[1])?)),
                    (TapeOp::Pop, Slot::TD(t)) => DExpr::Pop(t),
                    _ => return Err(EvalError::TypeMismatch("double tape expected".into())),
                },
                Callee::User(name) => self.user_call(name, args)?,
            },
        })
    }

    fn user_call(&mut self, name: &str, args: &[Expr]) -> Result<DExpr, EvalError> {
        let idx = *self.index.get(name).ok_or_else(|| EvalError::UnknownFunction(name.to_string()))?;
        let callee = &self.program.functions[idx];
        if args.len() > callee.params.len() {
            return Err(EvalError::ArityMismatch {
                function: name.to_string(),
                expected: callee.params.len(),
                got: args.len(),
            });
        }
        let mut out = Vec::with_capacity(callee.params.len());
        for (k, p) in callee.params.iter().enumerate() {
            let arg = match args.get(k) {
                Some(a) => a.clone(),
                None => match p.default {
                    Some(Literal::Int(v)) => Expr::int(v),
                    Some(Literal::Double(v)) => Expr::double(v),
                    None => {
                        return Err(EvalError::ArityMismatch {
                            function: name.to_string(),
                            expected: callee.params.len(),
                            got: args.len(),
                        })
                    }
                },
            };
            out.push(match p.ty {
                Type::Double => Arg::D(self.d(&arg)?),
                Type::Int if arg.ty == Type::Int => Arg::I(self.i(&arg)?),
                Type::DoubleArray => match (&arg.kind, self.lookup_array(&arg)) {
                    (ExprKind::Var(_), Some(a)) => Arg::A(a),
                    _ => return Err(type_arg(name, &p.name)),
                },
                _ => return Err(type_arg(name, &p.name)),
            });
        }
        Ok(DExpr::Call(idx as u32, out))
    }

    fn lookup_array(&self, e: &Expr) -> Option<u32> {
        match &e.kind {
            ExprKind::Var(n) => match self.lookup(n) {
                Ok(Slot::A(a)) => Some(a),
                _ => None,
            },
            _ => None,
        }
    }

    /// Lower an int-typed expression.
    fn i(&mut self, e: &Expr) -> Result<IExpr, EvalError> {
        if e.ty != Type::Int {
            return Err(EvalError::TypeMismatch(format!(
                "expected an int expression, found `{}`",
                crate::printer::print_expr(e)
            )));
        }
        Ok(match &e.kind {
            ExprKind::Literal(Literal::Int(v)) => IExpr::Lit(*v),
            ExprKind::Var(n) => match self.lookup(n)? {
                Slot::I(s) => IExpr::Var(s),
                _ => return Err(EvalError::TypeMismatch(format!("`{n}` is not an int"))),
            },
            ExprKind::Unary { operand, .. } => IExpr::Neg(Box::new(self.i(operand)?)),
            ExprKind::Binary { op, lhs, rhs } if op.is_comparison() => {
                let c = cmp(*op);
                if lhs.ty == Type::Int && rhs.ty == Type::Int {
                    IExpr::CmpI(c, Box::new(self.i(lhs)?), Box::new(self.i(rhs)?))
                } else {
                    IExpr::CmpD(c, Box::new(self.d(lhs)?), Box::new(self.d(rhs)?))
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                IExpr::Bin(arith(*op), Box::new(self.i(lhs)?), Box::new(self.i(rhs)?))
            }
            ExprKind::Call { callee: Callee::Tape(op), args } => match (op, self.tape(args)?) {
                (TapeOp::Push, Slot::TI(t)) => IExpr::Push(t, Box::new(self.i(&args[1])?)),
                (TapeOp::Pop, Slot::TI(t)) => IExpr::Pop(t),
                _ => return Err(EvalError::TypeMismatch("int tape expected".into())),
            },
            _ => {
                return Err(EvalError::TypeMismatch(format!(
                    "`{}` cannot be evaluated as int",
                    crate::printer::print_expr(e)
                )))
            }
        })
    }
}

enum Target {
    D(u32),
    I(u32),
    Elem(u32, IExpr),
}

fn type_arg(function: &str, param: &str) -> EvalError {
    EvalError::TypeMismatch(format!("argument `{param}` of `{function}` has the wrong type"))
}

fn arith(op: BinaryOp) -> Arith {
    match op {
        BinaryOp::Add => Arith::Add,
        BinaryOp::Sub => Arith::Sub,
        BinaryOp::Mul => Arith::Mul,
        BinaryOp::Div => Arith::Div,
        _ => unreachable!("comparison lowered as arithmetic"),
    }
}

fn cmp(op: BinaryOp) -> Cmp {
    match op {
        BinaryOp::Lt => Cmp::Lt,
        BinaryOp::Le => Cmp::Le,
        BinaryOp::Gt => Cmp::Gt,
        BinaryOp::Ge => Cmp::Ge,
        BinaryOp::Eq => Cmp::Eq,
        BinaryOp::Ne => Cmp::Ne,
        _ => unreachable!("arithmetic lowered as comparison"),
    }
}
