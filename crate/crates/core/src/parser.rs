//! Recursive-descent parser producing a fully typed [`Program`].
//!
//! Type checking happens while parsing: every [`Expr`] leaves the parser
//! with its [`Type`] set. Checks that are about program structure rather
//! than typing (duplicate parameters, unknown callees, default ordering)
//! are left to [`crate::validate`].

use std::collections::HashMap;

use crate::ast::*;
use crate::error::{ParseError, Pos};
use crate::lexer::{tokenize, Tok, Token};
use crate::printer::print_expr;

/// Source positions of each function header, index-aligned with
/// `Program::functions`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceMap {
    pub functions: Vec<Pos>,
}

pub fn parse(src: &str) -> Result<Program, ParseError> {
    parse_with_map(src).map(|(p, _)| p)
}

pub fn parse_with_map(src: &str) -> Result<(Program, SourceMap), ParseError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, at: 0, scopes: Vec::new() };
    let mut program = Program::default();
    let mut map = SourceMap::default();
    while parser.peek() != &Tok::Eof {
        let (func, pos) = parser.function()?;
        program.functions.push(func);
        map.functions.push(pos);
    }
    Ok((program, map))
}

const KEYWORDS: &[&str] = &["double", "int", "for", "if", "else", "return", "tape", "inline"];

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    scopes: Vec<HashMap<String, Type>>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.at + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            message: format!("unexpected {}", self.peek().describe()),
            expected: expected.to_string(),
        })
    }

    fn expect(&mut self, tok: Tok) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.bump().pos)
        } else {
            self.error(&format!("`{}`", tok.text()))
        }
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if self.is_ident(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn name(&mut self) -> PResult<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let pos = self.bump().pos;
                Ok((s, pos))
            }
            _ => self.error("an identifier"),
        }
    }

    fn type_error<T>(&self, pos: Pos, message: impl Into<String>, expr: &Expr) -> PResult<T> {
        Err(ParseError::Type { pos, message: message.into(), expr: print_expr(expr) })
    }

    // ---- scopes -------------------------------------------------------

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn declare(&mut self, name: &str, ty: Type, pos: Pos) -> PResult<()> {
        if NamedConst::from_name(name).is_some() {
            return Err(ParseError::Syntax {
                pos,
                message: format!("`{name}` is a reserved constant"),
                expected: "a variable name".into(),
            });
        }
        if self.lookup(name).is_some() {
            return Err(ParseError::Type {
                pos,
                message: format!("redeclaration of `{name}` shadows a visible name"),
                expr: name.to_string(),
            });
        }
        self.scopes.last_mut().expect("scope").insert(name.to_string(), ty);
        Ok(())
    }

    fn scoped<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        self.scopes.push(HashMap::new());
        let r = f(self);
        self.scopes.pop();
        r
    }

    // ---- declarations -------------------------------------------------

    fn function(&mut self) -> PResult<(FuncDef, Pos)> {
        let pos = self.pos();
        self.eat_ident("inline");
        if !self.eat_ident("double") {
            return self.error("`double` (functions return double)");
        }
        let (name, _) = self.name()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(self.param()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let body_pos = self.pos();
        self.scopes.clear();
        let mut frame = HashMap::new();
        for p in &params {
            // duplicates are reported by validate; first binding wins here
            frame.entry(p.name.clone()).or_insert(p.ty);
        }
        self.scopes.push(frame);
        let body = self.block()?;
        self.scopes.clear();
        if !always_returns(&body) {
            return Err(ParseError::MissingReturn { pos: body_pos, function: name });
        }
        Ok((FuncDef { name, params, body, ret: Type::Double }, pos))
    }

    fn param(&mut self) -> PResult<Param> {
        let ty = match self.value_type()? {
            Some(t) if !t.is_tape() => t,
            _ => return self.error("a parameter type (`double`, `int` or `double*`)"),
        };
        let (name, _) = self.name()?;
        let default = if *self.peek() == Tok::Assign {
            self.bump();
            Some(self.literal_for(ty)?)
        } else {
            None
        };
        Ok(Param { name, ty, default })
    }

    fn literal_for(&mut self, ty: Type) -> PResult<Literal> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let pos = self.pos();
        let lit = match self.peek().clone() {
            Tok::Int(v) => Literal::Int(if neg { -v } else { v }),
            Tok::Double(v) => Literal::Double(if neg { -v } else { v }),
            _ => return self.error("a numeric literal"),
        };
        self.bump();
        match (ty, lit) {
            (Type::Double, Literal::Int(v)) => Ok(Literal::Double(v as f64)),
            (Type::Double, l) | (Type::Int, l @ Literal::Int(_)) => Ok(l),
            _ => Err(ParseError::Type {
                pos,
                message: format!("default value does not fit parameter type `{ty}`"),
                expr: format!("{:?}", lit.as_f64()),
            }),
        }
    }

    /// Parses a type if one starts here.
    fn value_type(&mut self) -> PResult<Option<Type>> {
        if self.is_ident("double") {
            self.bump();
            if *self.peek() == Tok::Star {
                self.bump();
                return Ok(Some(Type::DoubleArray));
            }
            return Ok(Some(Type::Double));
        }
        if self.is_ident("int") {
            self.bump();
            return Ok(Some(Type::Int));
        }
        if self.is_ident("tape") {
            self.bump();
            self.expect(Tok::Lt)?;
            let ty = if self.eat_ident("int") {
                Type::IntTape
            } else if self.eat_ident("double") {
                Type::DoubleTape
            } else {
                return self.error("`int` or `double`");
            };
            self.expect(Tok::Gt)?;
            return Ok(Some(ty));
        }
        Ok(None)
    }

    // ---- statements ---------------------------------------------------

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace)?;
        self.scoped(|p| {
            let mut stmts = Vec::new();
            while *p.peek() != Tok::RBrace {
                if *p.peek() == Tok::Eof {
                    return p.error("`}`");
                }
                stmts.push(p.stmt()?);
            }
            p.bump();
            Ok(stmts)
        })
    }

    /// A loop or branch body: a braced block or a single statement.
    fn body(&mut self) -> PResult<Vec<Stmt>> {
        if *self.peek() == Tok::LBrace {
            self.block()
        } else {
            self.scoped(|p| Ok(vec![p.stmt()?]))
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        match self.peek().clone() {
            Tok::LBrace => Ok(Stmt::Block(self.block()?)),
            Tok::Ident(w) if w == "double" || w == "int" || w == "tape" => self.decl(),
            Tok::Ident(w) if w == "for" => self.for_stmt(),
            Tok::Ident(w) if w == "if" => self.if_stmt(),
            Tok::Ident(w) if w == "return" => {
                self.bump();
                let (e, epos) = self.expr()?;
                if !e.ty.is_numeric() {
                    return self.type_error(epos, "return value must be numeric", &e);
                }
                self.expect(Tok::Semi)?;
                Ok(Stmt::Return(e))
            }
            Tok::Ident(_) if matches!(self.peek_at(1), Tok::LParen | Tok::Colon2) => {
                let (e, _) = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Expr(e))
            }
            Tok::Ident(_) => {
                let s = self.assignment()?;
                self.expect(Tok::Semi)?;
                Ok(s)
            }
            _ => self.error("a statement"),
        }
    }

    fn decl(&mut self) -> PResult<Stmt> {
        let ty = self.value_type()?.expect("type keyword checked by caller");
        if ty == Type::DoubleArray {
            return Err(ParseError::Type {
                pos: self.pos(),
                message: "local arrays are not supported".into(),
                expr: "double*".into(),
            });
        }
        let (name, npos) = self.name()?;
        let init = if *self.peek() == Tok::Assign {
            if ty.is_tape() {
                return self.error("`;` (tapes start empty)");
            }
            self.bump();
            let (e, epos) = self.expr()?;
            self.check_store(ty, &e, epos)?;
            Some(e)
        } else {
            None
        };
        self.expect(Tok::Semi)?;
        self.declare(&name, ty, npos)?;
        Ok(Stmt::Decl { name, ty, init })
    }

    fn check_store(&self, target: Type, value: &Expr, pos: Pos) -> PResult<()> {
        let ok = match target {
            Type::Double => value.ty.is_numeric(),
            Type::Int => value.ty == Type::Int,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            self.type_error(pos, format!("cannot store a `{}` into a `{target}`", value.ty), value)
        }
    }

    fn lvalue(&mut self) -> PResult<(LValue, Type, Pos)> {
        let (name, pos) = self.name()?;
        let ty = match self.lookup(&name) {
            Some(t) => t,
            None => return Err(unbound(&name, pos)),
        };
        if *self.peek() == Tok::LBracket {
            self.bump();
            let (index, ipos) = self.expr()?;
            self.expect(Tok::RBracket)?;
            if ty != Type::DoubleArray {
                return self.type_error(pos, format!("`{name}` is not an array"), &index);
            }
            if index.ty != Type::Int {
                return self.type_error(ipos, "array index must be int", &index);
            }
            return Ok((LValue::Index { array: name, index }, Type::Double, pos));
        }
        if !ty.is_numeric() {
            let e = Expr::var(name.clone(), ty);
            return self.type_error(pos, format!("cannot assign to a `{ty}`"), &e);
        }
        Ok((LValue::Var(name), ty, pos))
    }

    fn assignment(&mut self) -> PResult<Stmt> {
        let (target, ty, _) = self.lvalue()?;
        let op = match self.peek() {
            Tok::Assign => None,
            Tok::PlusAssign => Some(AssignOp::Add),
            Tok::MinusAssign => Some(AssignOp::Sub),
            Tok::StarAssign => Some(AssignOp::Mul),
            Tok::SlashAssign => Some(AssignOp::Div),
            Tok::PlusPlus => {
                self.bump();
                return Ok(Stmt::CompoundAssign { op: AssignOp::Add, target, value: Expr::int(1) });
            }
            Tok::MinusMinus => {
                self.bump();
                return Ok(Stmt::CompoundAssign { op: AssignOp::Sub, target, value: Expr::int(1) });
            }
            _ => return self.error("an assignment operator"),
        };
        self.bump();
        let (value, vpos) = self.expr()?;
        self.check_store(ty, &value, vpos)?;
        Ok(match op {
            None => Stmt::Assign { target, value },
            Some(op) => Stmt::CompoundAssign { op, target, value },
        })
    }

    fn for_stmt(&mut self) -> PResult<Stmt> {
        self.bump();
        self.expect(Tok::LParen)?;
        if *self.peek() == Tok::Semi {
            self.bump();
            let (counter, pos) = self.name()?;
            match self.lookup(&counter) {
                Some(Type::Int) => {}
                Some(_) => {
                    let e = Expr::var(counter.clone(), Type::Double);
                    return self.type_error(pos, "replay counter must be int", &e);
                }
                None => return Err(unbound(&counter, pos)),
            }
            self.expect(Tok::Semi)?;
            let (again, _) = self.name()?;
            if again != counter {
                return self.error(&format!("`{counter}--`"));
            }
            self.expect(Tok::MinusMinus)?;
            self.expect(Tok::RParen)?;
            let body = self.body()?;
            return Ok(Stmt::Replay { counter, body });
        }
        if !self.eat_ident("int") {
            return self.error("`int` loop counter declaration or `;`");
        }
        let (counter, cpos) = self.name()?;
        self.expect(Tok::Assign)?;
        let (start, spos) = self.expr()?;
        if start.ty != Type::Int {
            return self.type_error(spos, "loop start must be int", &start);
        }
        self.expect(Tok::Semi)?;
        self.scoped(|p| {
            p.declare(&counter, Type::Int, cpos)?;
            let (cond, condpos) = p.expr()?;
            if cond.ty != Type::Int {
                return p.type_error(condpos, "loop condition must be int", &cond);
            }
            p.expect(Tok::Semi)?;
            let (inc, _) = p.name()?;
            if inc != counter {
                return p.error(&format!("`{counter}++`"));
            }
            p.expect(Tok::PlusPlus)?;
            p.expect(Tok::RParen)?;
            let body = p.body()?;
            Ok(Stmt::For { counter: counter.clone(), start, cond, body })
        })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        self.bump();
        self.expect(Tok::LParen)?;
        let (cond, pos) = self.expr()?;
        if cond.ty != Type::Int {
            return self.type_error(pos, "condition must be int (use a comparison)", &cond);
        }
        self.expect(Tok::RParen)?;
        let then_body = self.body()?;
        let else_body = if self.eat_ident("else") { Some(self.body()?) } else { None };
        Ok(Stmt::If { cond, then_body, else_body })
    }

    // ---- expressions --------------------------------------------------

    fn expr(&mut self) -> PResult<(Expr, Pos)> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            Tok::Slash => BinaryOp::Div,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::EqEq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<(Expr, Pos)> {
        let (mut lhs, pos) = self.unary()?;
        while let Some(op) = self.binary_op() {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let (rhs, rpos) = self.binary(op.precedence() + 1)?;
            if !lhs.ty.is_numeric() {
                return self.type_error(pos, format!("operand of `{}` must be numeric", op.symbol()), &lhs);
            }
            if !rhs.ty.is_numeric() {
                return self.type_error(rpos, format!("operand of `{}` must be numeric", op.symbol()), &rhs);
            }
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok((lhs, pos))
    }

    fn unary(&mut self) -> PResult<(Expr, Pos)> {
        if *self.peek() == Tok::Minus {
            let pos = self.bump().pos;
            match self.peek().clone() {
                Tok::Int(v) => {
                    self.bump();
                    return Ok((Expr::int(-v), pos));
                }
                Tok::Double(v) => {
                    self.bump();
                    return Ok((Expr::double(-v), pos));
                }
                _ => {}
            }
            let (operand, opos) = self.unary()?;
            if !operand.ty.is_numeric() {
                return self.type_error(opos, "operand of unary `-` must be numeric", &operand);
            }
            return Ok((Expr::negate(operand), pos));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<(Expr, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok((Expr::int(v), pos))
            }
            Tok::Double(v) => {
                self.bump();
                Ok((Expr::double(v), pos))
            }
            Tok::LParen => {
                self.bump();
                let (e, _) = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok((e, pos))
            }
            Tok::Ident(first) if !KEYWORDS.contains(&first.as_str()) => {
                self.bump();
                let mut name = first;
                if *self.peek() == Tok::Colon2 && (name == "std" || name == "clad") {
                    self.bump();
                    name = self.name()?.0;
                }
                if *self.peek() == Tok::LParen {
                    return self.call(name, pos);
                }
                if *self.peek() == Tok::LBracket {
                    self.bump();
                    let (index, ipos) = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    match self.lookup(&name) {
                        Some(Type::DoubleArray) => {}
                        Some(_) => {
                            return self.type_error(pos, format!("`{name}` is not an array"), &index)
                        }
                        None => return Err(unbound(&name, pos)),
                    }
                    if index.ty != Type::Int {
                        return self.type_error(ipos, "array index must be int", &index);
                    }
                    return Ok((Expr::index(name, index), pos));
                }
                if let Some(ty) = self.lookup(&name) {
                    return Ok((Expr::var(name, ty), pos));
                }
                if let Some(c) = NamedConst::from_name(&name) {
                    return Ok((Expr { kind: ExprKind::Const(c), ty: Type::Double }, pos));
                }
                Err(unbound(&name, pos))
            }
            _ => self.error("an expression"),
        }
    }

    fn call(&mut self, name: String, pos: Pos) -> PResult<(Expr, Pos)> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let arg_exprs: Vec<Expr> = args.iter().map(|(e, _)| e.clone()).collect();

        if let Some(f) = Intrinsic::from_name(&name) {
            let call = Expr::intrinsic(f, arg_exprs);
            if args.len() != f.arity() {
                return self.type_error(
                    pos,
                    format!("`{name}` takes {} argument(s), got {}", f.arity(), args.len()),
                    &call,
                );
            }
            for (a, apos) in &args {
                if !a.ty.is_numeric() {
                    return self.type_error(*apos, format!("argument of `{name}` must be numeric"), a);
                }
            }
            return Ok((call, pos));
        }

        if let Some(op) = TapeOp::from_name(&name) {
            let want = match op {
                TapeOp::Push => 2,
                TapeOp::Pop => 1,
            };
            let bad = |p: &Self, msg: &str| {
                let e = Expr { kind: ExprKind::Call { callee: Callee::Tape(op), args: arg_exprs.clone() }, ty: Type::Int };
                p.type_error(pos, msg.to_string(), &e)
            };
            if args.len() != want {
                return bad(self, &format!("`{name}` takes {want} argument(s)"));
            }
            let tape_ty = match &args[0].0.kind {
                ExprKind::Var(_) if args[0].0.ty.is_tape() => args[0].0.ty,
                _ => return bad(self, "first argument must be a tape variable"),
            };
            let tape_name = match &args[0].0.kind {
                ExprKind::Var(n) => n.clone(),
                _ => unreachable!(),
            };
            return Ok(match op {
                TapeOp::Pop => (Expr::pop(&tape_name, tape_ty), pos),
                TapeOp::Push => {
                    let v = &args[1].0;
                    let fits = match tape_ty {
                        Type::IntTape => v.ty == Type::Int,
                        _ => v.ty.is_numeric(),
                    };
                    if !fits {
                        return self.type_error(args[1].1, format!("cannot push a `{}` onto a `{tape_ty}`", v.ty), v);
                    }
                    (Expr::push(&tape_name, tape_ty, v.clone()), pos)
                }
            });
        }

        // User function: arity and argument types are checked by validate so
        // that forward references and unknown callees get proper diagnostics.
        for (a, apos) in &args {
            if a.ty.is_tape() {
                return self.type_error(*apos, "tapes cannot be passed to functions", a);
            }
        }
        Ok((
            Expr { kind: ExprKind::Call { callee: Callee::User(name), args: arg_exprs }, ty: Type::Double },
            pos,
        ))
    }
}

fn unbound(name: &str, pos: Pos) -> ParseError {
    ParseError::Type {
        pos,
        message: format!("use of undeclared name `{name}`"),
        expr: name.to_string(),
    }
}

/// True if every control path through `body` reaches a `return`.
pub fn always_returns(body: &[Stmt]) -> bool {
    body.iter().any(|s| match s {
        Stmt::Return(_) => true,
        Stmt::Block(b) => always_returns(b),
        Stmt::If { then_body, else_body: Some(e), .. } => always_returns(then_body) && always_returns(e),
        _ => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_function() {
        let p = parse("double f(double x) { return x*x; }").unwrap();
        assert_eq!(p.functions.len(), 1);
        let f = &p.functions[0];
        assert_eq!(f.name, "f");
        assert_eq!(
            f.body,
            vec![Stmt::Return(Expr::binary(
                BinaryOp::Mul,
                Expr::var("x", Type::Double),
                Expr::var("x", Type::Double)
            ))]
        );
    }

    #[test]
    fn missing_return() {
        let err = parse("double f(double x) { x = 1; }").unwrap_err();
        assert!(matches!(err, ParseError::MissingReturn { ref function, .. } if function == "f"));
    }

    #[test]
    fn missing_return_on_one_branch() {
        let err = parse("double f(double x) { if (x < 0) { return 1; } }").unwrap_err();
        assert!(matches!(err, ParseError::MissingReturn { .. }));
        assert!(parse("double f(double x) { if (x < 0) { return 1; } else { return 2; } }").is_ok());
    }

    #[test]
    fn breit_wigner_listing() {
        let src = "inline double breitwigner_pdf(double x, double gamma, double x0 = 0) {
            double gammahalf = gamma/2.0;
            return gammahalf/(M_PI * ((x-x0)*(x-x0) + gammahalf*gammahalf));
        }";
        let p = parse(src).unwrap();
        let f = &p.functions[0];
        assert_eq!(f.params.len(), 3);
        assert_eq!(f.params[2].default, Some(Literal::Double(0.0)));
        assert_eq!(f.body.len(), 2);
    }

    #[test]
    fn types_are_annotated_and_promoted() {
        let p = parse("double f(int n, double s) { return -n/2.0 + s; }").unwrap();
        let Stmt::Return(e) = &p.functions[0].body[0] else { panic!() };
        assert_eq!(e.ty, Type::Double);
        let ExprKind::Binary { lhs, .. } = &e.kind else { panic!() };
        let ExprKind::Binary { lhs: neg, .. } = &lhs.kind else { panic!() };
        assert_eq!(neg.ty, Type::Int);
    }

    #[test]
    fn comparisons_yield_int() {
        let p = parse("double f(double x) { int c = x < 1.0; return c; }").unwrap();
        let Stmt::Decl { init: Some(e), .. } = &p.functions[0].body[0] else { panic!() };
        assert_eq!(e.ty, Type::Int);
    }

    #[test]
    fn type_errors_carry_positions() {
        let err = parse("double f(double x) {\n  int k = x;\n  return k;\n}").unwrap_err();
        match err {
            ParseError::Type { pos, .. } => assert_eq!(pos, Pos { line: 2, col: 11 }),
            e => panic!("{e:?}"),
        }
        assert!(matches!(parse("double f(double x) { return x[0]; }"), Err(ParseError::Type { .. })));
        assert!(matches!(parse("double f(double* p) { return p[1.0]; }"), Err(ParseError::Type { .. })));
        assert!(matches!(parse("double f(double x) { return pow(x); }"), Err(ParseError::Type { .. })));
        assert!(matches!(parse("double f(double x) { return sin(x, x); }"), Err(ParseError::Type { .. })));
        assert!(matches!(parse("double f(double x) { return y; }"), Err(ParseError::Type { .. })));
    }

    #[test]
    fn syntax_error_reports_expected() {
        let err = parse("double f(double x) { return x +; }").unwrap_err();
        match err {
            ParseError::Syntax { pos, expected, .. } => {
                assert_eq!(pos.col, 32);
                assert_eq!(expected, "an expression");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn replay_loops_and_tapes() {
        let src = "double g(double* p, int n) {
            int _t0 = 0;
            tape<int> _t1;
            for (int i = 0; i < n; i++) { _t0++; push(_t1, i); }
            for (; _t0; _t0--) { int i = pop(_t1); p[i] += 1; }
            return 0;
        }";
        let p = parse(src).unwrap();
        let body = &p.functions[0].body;
        assert!(matches!(body[3], Stmt::Replay { .. }));
        assert!(matches!(body[1], Stmt::Decl { ty: Type::IntTape, init: None, .. }));
    }

    #[test]
    fn shadowing_is_rejected_but_disjoint_reuse_is_fine() {
        assert!(parse("double f(double x) { double x = 1; return x; }").is_err());
        let ok = "double f(int n) {
            double s = 0;
            for (int i = 0; i < n; i++) s += i;
            for (int i = 0; i < n; i++) s += i;
            return s;
        }";
        assert!(parse(ok).is_ok());
    }

    #[test]
    fn namespaced_calls() {
        let p = parse("double f(double x) { return std::pow(x, 2) * std::exp(x); }").unwrap();
        assert_eq!(p.functions.len(), 1);
    }
}
