//! Typed syntax tree shared by the parser, printer, interpreter and both
//! differentiation transforms.

use std::fmt;

/// Static type of a value, variable or expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Double,
    Int,
    /// `double*`: an opaque, caller-owned array parameter.
    DoubleArray,
    /// `tape<int>`: LIFO store used by generated gradient code.
    IntTape,
    /// `tape<double>`
    DoubleTape,
}

impl Type {
    pub fn is_numeric(self) -> bool {
        matches!(self, Type::Double | Type::Int)
    }

    pub fn is_tape(self) -> bool {
        matches!(self, Type::IntTape | Type::DoubleTape)
    }

    /// Element type stored by a tape.
    pub fn tape_element(self) -> Option<Type> {
        match self {
            Type::IntTape => Some(Type::Int),
            Type::DoubleTape => Some(Type::Double),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Double => "double",
            Type::Int => "int",
            Type::DoubleArray => "double*",
            Type::IntTape => "tape<int>",
            Type::DoubleTape => "tape<double>",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Literal {
    Int(i64),
    Double(f64),
}

impl Literal {
    pub fn ty(self) -> Type {
        match self {
            Literal::Int(_) => Type::Int,
            Literal::Double(_) => Type::Double,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Literal::Int(v) => v as f64,
            Literal::Double(v) => v,
        }
    }
}

/// Named numeric constants available in every function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedConst {
    Pi,
}

impl NamedConst {
    pub fn name(self) -> &'static str {
        match self {
            NamedConst::Pi => "M_PI",
        }
    }

    pub fn value(self) -> f64 {
        match self {
            NamedConst::Pi => std::f64::consts::PI,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "M_PI" => Some(NamedConst::Pi),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
        }
    }

    pub fn is_comparison(self) -> bool {
        !matches!(
            self,
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div
        )
    }

    /// Binding strength; higher binds tighter. All binary operators are
    /// left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Eq | BinaryOp::Ne => 1,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 2,
            BinaryOp::Add | BinaryOp::Sub => 3,
            BinaryOp::Mul | BinaryOp::Div => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Pow,
}

impl Intrinsic {
    pub const ALL: [Intrinsic; 6] = [
        Intrinsic::Sin,
        Intrinsic::Cos,
        Intrinsic::Exp,
        Intrinsic::Log,
        Intrinsic::Sqrt,
        Intrinsic::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Sin => "sin",
            Intrinsic::Cos => "cos",
            Intrinsic::Exp => "exp",
            Intrinsic::Log => "log",
            Intrinsic::Sqrt => "sqrt",
            Intrinsic::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Intrinsic::Pow => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.name() == name)
    }
}

/// Tape builtins used by generated gradient code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TapeOp {
    /// `push(t, v)` stores `v` and evaluates to `v`.
    Push,
    /// `pop(t)` removes and evaluates to the most recent element.
    Pop,
}

impl TapeOp {
    pub fn name(self) -> &'static str {
        match self {
            TapeOp::Push => "push",
            TapeOp::Pop => "pop",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "push" => Some(TapeOp::Push),
            "pop" => Some(TapeOp::Pop),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Callee {
    Intrinsic(Intrinsic),
    Tape(TapeOp),
    User(String),
}

impl Callee {
    pub fn name(&self) -> &str {
        match self {
            Callee::Intrinsic(i) => i.name(),
            Callee::Tape(t) => t.name(),
            Callee::User(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Literal(Literal),
    Const(NamedConst),
    Var(String),
    Index { array: String, index: Box<Expr> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { callee: Callee, args: Vec<Expr> },
}

/// Result type of mixed arithmetic: `int op int` stays `int`, anything
/// involving a `double` is promoted.
pub fn arithmetic_result(lhs: Type, rhs: Type) -> Type {
    if lhs == Type::Int && rhs == Type::Int {
        Type::Int
    } else {
        Type::Double
    }
}

impl Expr {
    pub fn int(v: i64) -> Self {
        Expr { kind: ExprKind::Literal(Literal::Int(v)), ty: Type::Int }
    }

    pub fn double(v: f64) -> Self {
        Expr { kind: ExprKind::Literal(Literal::Double(v)), ty: Type::Double }
    }

    pub fn var(name: impl Into<String>, ty: Type) -> Self {
        Expr { kind: ExprKind::Var(name.into()), ty }
    }

    pub fn index(array: impl Into<String>, index: Expr) -> Self {
        Expr {
            kind: ExprKind::Index { array: array.into(), index: Box::new(index) },
            ty: Type::Double,
        }
    }

    pub fn negate(operand: Expr) -> Self {
        let ty = operand.ty;
        Expr { kind: ExprKind::Unary { op: UnaryOp::Neg, operand: Box::new(operand) }, ty }
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        let ty = if op.is_comparison() {
            Type::Int
        } else {
            arithmetic_result(lhs.ty, rhs.ty)
        };
        Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, ty }
    }

    pub fn intrinsic(f: Intrinsic, args: Vec<Expr>) -> Self {
        Expr { kind: ExprKind::Call { callee: Callee::Intrinsic(f), args }, ty: Type::Double }
    }

    pub fn push(tape: &str, tape_ty: Type, value: Expr) -> Self {
        let ty = tape_ty.tape_element().expect("push onto a non-tape");
        Expr {
            kind: ExprKind::Call {
                callee: Callee::Tape(TapeOp::Push),
                args: vec![Expr::var(tape, tape_ty), value],
            },
            ty,
        }
    }

    pub fn pop(tape: &str, tape_ty: Type) -> Self {
        let ty = tape_ty.tape_element().expect("pop from a non-tape");
        Expr {
            kind: ExprKind::Call {
                callee: Callee::Tape(TapeOp::Pop),
                args: vec![Expr::var(tape, tape_ty)],
            },
            ty,
        }
    }

    pub fn as_literal(&self) -> Option<Literal> {
        match self.kind {
            ExprKind::Literal(l) => Some(l),
            _ => None,
        }
    }

    /// Pre-order visit of this node and all sub-expressions.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Literal(_) | ExprKind::Const(_) | ExprKind::Var(_) => {}
            ExprKind::Index { index, .. } => index.walk(f),
            ExprKind::Unary { operand, .. } => operand.walk(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
        }
    }

    /// Names read by this expression, including array names.
    pub fn names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| match &e.kind {
            ExprKind::Var(n) => out.push(n.as_str()),
            ExprKind::Index { array, .. } => out.push(array.as_str()),
            _ => {}
        });
        out
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.names().contains(&name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LValue {
    Var(String),
    Index { array: String, index: Expr },
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Var(n) => n,
            LValue::Index { array, .. } => array,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
        }
    }

    pub fn binary(self) -> BinaryOp {
        match self {
            AssignOp::Add => BinaryOp::Add,
            AssignOp::Sub => BinaryOp::Sub,
            AssignOp::Mul => BinaryOp::Mul,
            AssignOp::Div => BinaryOp::Div,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// `T name = init;` An omitted initializer zero-fills (tapes start empty).
    Decl { name: String, ty: Type, init: Option<Expr> },
    Assign { target: LValue, value: Expr },
    CompoundAssign { op: AssignOp, target: LValue, value: Expr },
    /// `for (int counter = start; cond; counter++) body`
    For { counter: String, start: Expr, cond: Expr, body: Vec<Stmt> },
    /// `for (; counter; counter--) body`: runs `body` while `counter` is
    /// non-zero, decrementing after each pass. Emitted by the reverse
    /// transform to replay loops backwards.
    Replay { counter: String, body: Vec<Stmt> },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    Return(Expr),
    Block(Vec<Stmt>),
    /// Expression evaluated for its effect (tape pushes).
    Expr(Expr),
}

impl Stmt {
    pub fn assign(name: impl Into<String>, value: Expr) -> Self {
        Stmt::Assign { target: LValue::Var(name.into()), value }
    }

    pub fn compound(op: AssignOp, name: impl Into<String>, value: Expr) -> Self {
        Stmt::CompoundAssign { op, target: LValue::Var(name.into()), value }
    }

    pub fn decl(name: impl Into<String>, ty: Type, init: Option<Expr>) -> Self {
        Stmt::Decl { name: name.into(), ty, init }
    }

    /// Visit this statement and every nested statement, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::For { body, .. } | Stmt::Replay { body, .. } | Stmt::Block(body) => {
                body.iter().for_each(|s| s.walk(f))
            }
            Stmt::If { then_body, else_body, .. } => {
                then_body.iter().for_each(|s| s.walk(f));
                if let Some(e) = else_body {
                    e.iter().for_each(|s| s.walk(f));
                }
            }
            _ => {}
        }
    }

    /// Expressions held directly by this statement (not nested statements).
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Decl { init, .. } => init.iter().collect(),
            Stmt::Assign { target, value } | Stmt::CompoundAssign { target, value, .. } => {
                let mut v = vec![value];
                if let LValue::Index { index, .. } = target {
                    v.push(index);
                }
                v
            }
            Stmt::For { start, cond, .. } => vec![start, cond],
            Stmt::Replay { .. } | Stmt::Block(_) => vec![],
            Stmt::If { cond, .. } => vec![cond],
            Stmt::Return(e) | Stmt::Expr(e) => vec![e],
        }
    }
}

/// Walk every statement of a body, pre-order.
pub fn walk_body<'a>(body: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    body.iter().for_each(|s| s.walk(f));
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
    pub default: Option<Literal>,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: Type) -> Self {
        Param { name: name.into(), ty, default: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// Always `double` in this language.
    pub ret: Type,
}

impl FuncDef {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn count_loops(&self) -> usize {
        let mut n = 0;
        walk_body(&self.body, &mut |s| {
            if matches!(s, Stmt::For { .. }) {
                n += 1
            }
        });
        n
    }

    pub fn count_branches(&self) -> usize {
        let mut n = 0;
        walk_body(&self.body, &mut |s| {
            if matches!(s, Stmt::If { .. }) {
                n += 1
            }
        });
        n
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub functions: Vec<FuncDef>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FuncDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }
}
