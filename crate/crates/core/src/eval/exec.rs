use crate::ast::{Intrinsic, Literal};
use crate::eval::compile::{Arg, Arith, CFunc, CStmt, Cmp, DExpr, IExpr, Slot};
use crate::eval::{Array, EvalError, Interpreter, Tape, Value, MAX_CALL_DEPTH};

pub(crate) struct Frame {
    d: Vec<f64>,
    i: Vec<i64>,
    a: Vec<Array>,
    ti: Vec<Tape<i64>>,
    td: Vec<Tape<f64>>,
}

impl Frame {
    fn new(f: &CFunc) -> Self {
        let l = &f.layout;
        Frame {
            d: vec![0.0; l.doubles as usize],
            i: vec![0; l.ints as usize],
            a: Vec::with_capacity(l.arrays as usize),
            ti: (0..l.int_tapes).map(|_| Tape::new()).collect(),
            td: (0..l.double_tapes).map(|_| Tape::new()).collect(),
        }
    }

    fn tape_residue(&self) -> usize {
        self.ti.iter().map(Tape::len).sum::<usize>() + self.td.iter().map(Tape::len).sum::<usize>()
    }
}

type R<T> = Result<T, EvalError>;

fn domain(msg: impl Into<String>) -> EvalError {
    EvalError::DomainError(msg.into())
}

#[inline]
fn arith_d(op: Arith, a: f64, b: f64) -> R<f64> {
    Ok(match op {
        Arith::Add => a + b,
        Arith::Sub => a - b,
        Arith::Mul => a * b,
        Arith::Div => {
            if b == 0.0 {
                return Err(domain(format!("division of {a} by zero")));
            }
            a / b
        }
    })
}

#[inline]
fn arith_i(op: Arith, a: i64, b: i64) -> R<i64> {
    let r = match op {
        Arith::Add => a.checked_add(b),
        Arith::Sub => a.checked_sub(b),
        Arith::Mul => a.checked_mul(b),
        Arith::Div => {
            if b == 0 {
                return Err(domain("integer division by zero"));
            }
            a.checked_div(b)
        }
    };
    r.ok_or_else(|| domain("integer overflow"))
}

#[inline]
fn compare<T: PartialOrd>(op: Cmp, a: T, b: T) -> i64 {
    (match op {
        Cmp::Lt => a < b,
        Cmp::Le => a <= b,
        Cmp::Gt => a > b,
        Cmp::Ge => a >= b,
        Cmp::Eq => a == b,
        Cmp::Ne => a != b,
    }) as i64
}

fn intrinsic(f: Intrinsic, x: f64) -> R<f64> {
    Ok(match f {
        Intrinsic::Sin => x.sin(),
        Intrinsic::Cos => x.cos(),
        Intrinsic::Exp => x.exp(),
        Intrinsic::Log => {
            if x <= 0.0 {
                return Err(domain(format!("log({x})")));
            }
            x.ln()
        }
        Intrinsic::Sqrt => {
            if x < 0.0 {
                return Err(domain(format!("sqrt({x})")));
            }
            x.sqrt()
        }
        Intrinsic::Pow => unreachable!("pow is binary"),
    })
}

fn pow(a: f64, b: f64) -> R<f64> {
    if a == 0.0 && b < 0.0 {
        return Err(domain(format!("pow({a}, {b})")));
    }
    let r = a.powf(b);
    if r.is_nan() && !a.is_nan() && !b.is_nan() {
        return Err(domain(format!("pow({a}, {b})")));
    }
    Ok(r)
}

impl<'c> Interpreter<'c> {
    pub(crate) fn call_index(&mut self, idx: usize, args: &[Value]) -> R<f64> {
        let program = self.program;
        let f = &program.funcs[idx];
        if args.len() > f.params.len() {
            return Err(EvalError::ArityMismatch { function: f.name.clone(), expected: f.params.len(), got: args.len() });
        }
        let mut frame = Frame::new(f);
        for (k, (param, slot)) in f.params.iter().enumerate() {
            let value = match args.get(k) {
                Some(v) => v.clone(),
                None => match param.default {
                    Some(Literal::Double(v)) => Value::D(v),
                    Some(Literal::Int(v)) => Value::I(v),
                    None => {
                        return Err(EvalError::ArityMismatch {
                            function: f.name.clone(),
                            expected: f.params.len(),
                            got: args.len(),
                        })
                    }
                },
            };
            match (slot, value) {
                (Slot::D(s), Value::D(v)) => frame.d[*s as usize] = v,
                (Slot::D(s), Value::I(v)) => frame.d[*s as usize] = v as f64,
                (Slot::I(s), Value::I(v)) => frame.i[*s as usize] = v,
                (Slot::A(_), Value::Arr(a)) => frame.a.push(a),
                (_, v) => {
                    return Err(EvalError::TypeMismatch(format!(
                        "parameter `{}` of `{}` is `{}`, got a `{}`",
                        param.name,
                        f.name,
                        param.ty,
                        v.ty()
                    )))
                }
            }
        }
        let r = self.run(f, &mut frame);
        self.residue = frame.tape_residue();
        r
    }

    fn run(&mut self, f: &'c CFunc, frame: &mut Frame) -> R<f64> {
        match self.block(f, frame, &f.body)? {
            Some(v) => Ok(v),
            None => Err(domain(format!("`{}` finished without returning", f.name))),
        }
    }

    #[inline]
    fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(EvalError::NonTermination(self.max_steps));
        }
        Ok(())
    }

    fn block(&mut self, f: &'c CFunc, fr: &mut Frame, body: &'c [CStmt]) -> R<Option<f64>> {
        for s in body {
            if let Some(v) = self.stmt(f, fr, s)? {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    fn element(&self, f: &CFunc, fr: &Frame, a: u32, k: i64) -> R<usize> {
        let len = fr.a[a as usize].len();
        if k < 0 || k as usize >= len {
            return Err(EvalError::IndexOutOfBounds { array: f.array_names[a as usize].clone(), index: k, len });
        }
        Ok(k as usize)
    }

    fn stmt(&mut self, f: &'c CFunc, fr: &mut Frame, s: &'c CStmt) -> R<Option<f64>> {
        self.tick()?;
        match s {
            CStmt::SetD(slot, e) => fr.d[*slot as usize] = self.d(f, fr, e)?,
            CStmt::SetI(slot, e) => fr.i[*slot as usize] = self.i(f, fr, e)?,
            CStmt::SetElem(a, idx, e) => {
                let k = self.i(f, fr, idx)?;
                let k = self.element(f, fr, *a, k)?;
                let v = self.d(f, fr, e)?;
                fr.a[*a as usize].set(k, v);
            }
            CStmt::UpdD(op, slot, e) => {
                let v = self.d(f, fr, e)?;
                self.stats.scalar_ops += 1;
                let s = *slot as usize;
                fr.d[s] = arith_d(*op, fr.d[s], v)?;
            }
            CStmt::UpdI(op, slot, e) => {
                let v = self.i(f, fr, e)?;
                self.stats.scalar_ops += 1;
                let s = *slot as usize;
                fr.i[s] = arith_i(*op, fr.i[s], v)?;
            }
            CStmt::UpdElem(op, a, idx, e) => {
                let k = self.i(f, fr, idx)?;
                let k = self.element(f, fr, *a, k)?;
                let v = self.d(f, fr, e)?;
                self.stats.scalar_ops += 1;
                let arr = &fr.a[*a as usize];
                arr.set(k, arith_d(*op, arr.get(k), v)?);
            }
            CStmt::ResetTapeI(t) => fr.ti[*t as usize].clear(),
            CStmt::ResetTapeD(t) => fr.td[*t as usize].clear(),
            CStmt::For { counter, start, cond, body } => {
                let c = *counter as usize;
                fr.i[c] = self.i(f, fr, start)?;
                loop {
                    if self.i(f, fr, cond)? == 0 {
                        break;
                    }
                    if let Some(v) = self.block(f, fr, body)? {
                        return Ok(Some(v));
                    }
                    self.tick()?;
                    self.stats.scalar_ops += 1;
                    fr.i[c] = arith_i(Arith::Add, fr.i[c], 1)?;
                }
            }
            CStmt::Replay { counter, body } => {
                let c = *counter as usize;
                loop {
                    self.stats.scalar_ops += 1;
                    if fr.i[c] == 0 {
                        break;
                    }
                    if let Some(v) = self.block(f, fr, body)? {
                        return Ok(Some(v));
                    }
                    self.tick()?;
                    self.stats.scalar_ops += 1;
                    fr.i[c] = arith_i(Arith::Sub, fr.i[c], 1)?;
                }
            }
            CStmt::If { cond, then_body, else_body } => {
                let taken = if self.i(f, fr, cond)? != 0 { then_body } else { else_body };
                return self.block(f, fr, taken);
            }
            CStmt::Return(e) => return Ok(Some(self.d(f, fr, e)?)),
            CStmt::Block(b) => return self.block(f, fr, b),
            CStmt::EvalD(e) => {
                self.d(f, fr, e)?;
            }
            CStmt::EvalI(e) => {
                self.i(f, fr, e)?;
            }
        }
        Ok(None)
    }

    fn d(&mut self, f: &'c CFunc, fr: &mut Frame, e: &'c DExpr) -> R<f64> {
        Ok(match e {
            DExpr::Lit(v) => *v,
            DExpr::Var(s) => fr.d[*s as usize],
            DExpr::Index(a, idx) => {
                let k = self.i(f, fr, idx)?;
                let k = self.element(f, fr, *a, k)?;
                fr.a[*a as usize].cells()[k].get()
            }
            DExpr::Neg(x) => {
                let v = self.d(f, fr, x)?;
                self.stats.scalar_ops += 1;
                -v
            }
            DExpr::Bin(op, l, r) => {
                let a = self.d(f, fr, l)?;
                let b = self.d(f, fr, r)?;
                self.stats.scalar_ops += 1;
                arith_d(*op, a, b)?
            }
            DExpr::FromInt(x) => self.i(f, fr, x)? as f64,
            DExpr::Unary(func, x) => {
                let v = self.d(f, fr, x)?;
                self.stats.scalar_ops += 1;
                self.stats.intrinsic_calls += 1;
                intrinsic(*func, v)?
            }
            DExpr::Pow(l, r) => {
                let a = self.d(f, fr, l)?;
                let b = self.d(f, fr, r)?;
                self.stats.scalar_ops += 1;
                self.stats.intrinsic_calls += 1;
                pow(a, b)?
            }
            DExpr::Call(idx, args) => {
                let program = self.program;
                let callee = &program.funcs[*idx as usize];
                let mut frame = Frame::new(callee);
                for (arg, (_, slot)) in args.iter().zip(&callee.params) {
                    match (arg, slot) {
                        (Arg::D(x), Slot::D(s)) => frame.d[*s as usize] = self.d(f, fr, x)?,
                        (Arg::I(x), Slot::I(s)) => frame.i[*s as usize] = self.i(f, fr, x)?,
                        (Arg::A(a), Slot::A(_)) => frame.a.push(fr.a[*a as usize].clone()),
                        _ => return Err(EvalError::TypeMismatch(format!("bad argument to `{}`", callee.name))),
                    }
                }
                if self.depth >= MAX_CALL_DEPTH {
                    return Err(EvalError::NonTermination(self.max_steps));
                }
                self.depth += 1;
                let r = self.run(callee, &mut frame);
                self.depth -= 1;
                r?
            }
            DExpr::Push(t, x) => {
                let v = self.d(f, fr, x)?;
                self.stats.scalar_ops += 1;
                fr.td[*t as usize].push(v)
            }
            DExpr::Pop(t) => {
                self.stats.scalar_ops += 1;
                fr.td[*t as usize].pop()?
            }
        })
    }

    fn i(&mut self, f: &'c CFunc, fr: &mut Frame, e: &'c IExpr) -> R<i64> {
        Ok(match e {
            IExpr::Lit(v) => *v,
            IExpr::Var(s) => fr.i[*s as usize],
            IExpr::Neg(x) => {
                let v = self.i(f, fr, x)?;
                self.stats.scalar_ops += 1;
                v.checked_neg().ok_or_else(|| domain("integer overflow"))?
            }
            IExpr::Bin(op, l, r) => {
                let a = self.i(f, fr, l)?;
                let b = self.i(f, fr, r)?;
                self.stats.scalar_ops += 1;
                arith_i(*op, a, b)?
            }
            IExpr::CmpI(op, l, r) => {
                let a = self.i(f, fr, l)?;
                let b = self.i(f, fr, r)?;
                self.stats.scalar_ops += 1;
                compare(*op, a, b)
            }
            IExpr::CmpD(op, l, r) => {
                let a = self.d(f, fr, l)?;
                let b = self.d(f, fr, r)?;
                self.stats.scalar_ops += 1;
                compare(*op, a, b)
            }
            IExpr::Push(t, x) => {
                let v = self.i(f, fr, x)?;
                self.stats.scalar_ops += 1;
                fr.ti[*t as usize].push(v)
            }
            IExpr::Pop(t) => {
                self.stats.scalar_ops += 1;
                fr.ti[*t as usize].pop()?
            }
        })
    }
}
