//! Reverse mode: a gradient function that runs the original computation
//! once, recording what the backward pass needs on tapes, then accumulates
//! adjoints into a caller-provided `_result` array.

use std::collections::{HashMap, HashSet};

use crate::ad::analysis::{active_set, assigned, contains_return, is_active, reads};
use crate::ad::build::*;
use crate::ad::forward::shadow;
use crate::ad::inline::{inline_calls, returns_to_assign, tail_form};
use crate::ad::{check_source, load, unsupported, AdError, Mode, SourceError};
use crate::ast::*;
use crate::eval::Value;

pub const RESULT: &str = "_result";
const RET: &str = "_ret";

#[derive(Debug, Clone, PartialEq)]
pub struct GradRequest {
    pub func: FuncDef,
    /// Double or array parameters; arrays contribute one slot per element.
    pub wrt: Vec<String>,
    pub context: Vec<FuncDef>,
    /// Length expressions for array parameters, used to place the slots
    /// that follow them. When absent, a function with exactly one int
    /// parameter uses that parameter.
    pub lengths: Vec<(String, Expr)>,
}

impl GradRequest {
    pub fn new<S: Into<String>>(func: FuncDef, wrt: impl IntoIterator<Item = S>) -> Self {
        GradRequest { func, wrt: wrt.into_iter().map(Into::into).collect(), context: Vec::new(), lengths: Vec::new() }
    }

    pub fn with_context(mut self, functions: &[FuncDef]) -> Self {
        self.context = functions.to_vec();
        self
    }

    pub fn with_length(mut self, array: impl Into<String>, len: Expr) -> Self {
        self.lengths.push((array.into(), len));
        self
    }
}

/// One group of `_result` slots, in layout order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotGroup {
    Array(String),
    Scalar(String),
}

impl SlotGroup {
    pub fn param(&self) -> &str {
        match self {
            SlotGroup::Array(p) | SlotGroup::Scalar(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradFunc {
    pub original: FuncDef,
    /// Original parameters followed by `double* _result`; returns 0.
    pub gradient: FuncDef,
    pub mode: Mode,
    /// Array groups first, then scalars, each in declaration order.
    pub layout: Vec<SlotGroup>,
}

impl GradFunc {
    /// Number of `_result` slots for a call with `args` (original
    /// parameters only), or `None` if an array argument is missing.
    pub fn result_len(&self, args: &[Value]) -> Option<usize> {
        self.layout.iter().try_fold(0, |acc, g| match g {
            SlotGroup::Scalar(_) => Some(acc + 1),
            SlotGroup::Array(p) => {
                let idx = self.original.params.iter().position(|q| &q.name == p)?;
                match args.get(idx)? {
                    Value::Arr(a) => Some(acc + a.len()),
                    _ => None,
                }
            }
        })
    }

    /// Human-readable label of each slot for a call with `args`.
    pub fn slot_labels(&self, args: &[Value]) -> Vec<String> {
        let mut out = Vec::new();
        for g in &self.layout {
            match g {
                SlotGroup::Scalar(p) => out.push(p.clone()),
                SlotGroup::Array(p) => {
                    let idx = self.original.params.iter().position(|q| &q.name == p);
                    if let Some(Value::Arr(a)) = idx.and_then(|i| args.get(i)) {
                        out.extend((0..a.len()).map(|k| format!("{p}[{k}]")));
                    }
                }
            }
        }
        out
    }
}

pub fn gradient_name(f: &str) -> String {
    format!("{f}_grad")
}

/// Parse `src` and print the gradient of `fname`. An empty `wrt` selects
/// every double and array parameter.
pub fn gradient_source(src: &str, fname: &str, wrt: &[&str]) -> Result<String, SourceError> {
    let (program, f) = load(src, fname)?;
    let wrt: Vec<String> = if wrt.is_empty() {
        f.params.iter().filter(|p| matches!(p.ty, Type::Double | Type::DoubleArray)).map(|p| p.name.clone()).collect()
    } else {
        wrt.iter().map(|s| s.trim().to_string()).collect()
    };
    let req = GradRequest::new(f, wrt).with_context(&program.functions);
    Ok(crate::printer::print_function(&gradient(&req)?.gradient))
}

pub fn gradient(req: &GradRequest) -> Result<GradFunc, AdError> {
    let f = &req.func;
    if req.wrt.is_empty() {
        return unsupported("gradient with respect to nothing");
    }
    let mut wrt = HashSet::new();
    for w in &req.wrt {
        let p = f.param(w).ok_or_else(|| AdError::UnknownParameter(w.clone()))?;
        if !matches!(p.ty, Type::Double | Type::DoubleArray) {
            return unsupported(format!("gradient with respect to `{w}` of type {}", p.ty));
        }
        wrt.insert(w.clone());
    }
    check_source(f)?;
    let inlined = inline_calls(f, &req.context)?;

    let mut body = tail_form(inlined.body)?;
    let single = matches!(body.last(), Some(Stmt::Return(_))) && !contains_return(&body[..body.len() - 1]);
    let mut hoisted = Vec::new();
    let result = if single {
        let Some(Stmt::Return(e)) = body.pop() else { unreachable!() };
        e
    } else {
        returns_to_assign(&mut body, RET);
        hoisted.push((RET.to_string(), Type::Double));
        Expr::var(RET, Type::Double)
    };
    let mut body = hoist(body, &mut hoisted)?;

    let mut types: HashMap<String, Type> = f.params.iter().map(|p| (p.name.clone(), p.ty)).collect();
    let mut top_locals = Vec::new();
    for (n, t) in &hoisted {
        types.insert(n.clone(), *t);
    }
    for s in &body {
        if let Stmt::Decl { name, ty, .. } = s {
            types.insert(name.clone(), *ty);
            top_locals.push(name.clone());
        }
    }

    desugar(&mut body, &types);
    let active = active_set(&body, wrt.iter().cloned());
    let written = assigned(&body);

    // result layout
    let mut layout: Vec<SlotGroup> = f.params.iter().filter(|p| wrt.contains(&p.name) && p.ty == Type::DoubleArray).map(|p| SlotGroup::Array(p.name.clone())).collect();
    layout.extend(f.params.iter().filter(|p| wrt.contains(&p.name) && p.ty == Type::Double).map(|p| SlotGroup::Scalar(p.name.clone())));
    let mut offset: Option<Expr> = None;
    let mut arrays = HashMap::new();
    let mut scalars = Vec::new();
    for (i, g) in layout.iter().enumerate() {
        let here = offset.clone();
        match g {
            SlotGroup::Array(p) => {
                arrays.insert(p.clone(), here);
                if i + 1 < layout.len() {
                    let len = array_len(req, p)?;
                    offset = Some(match offset {
                        None => len,
                        Some(o) => Expr::binary(BinaryOp::Add, o, len),
                    });
                }
            }
            SlotGroup::Scalar(p) => {
                scalars.push((p.clone(), here.unwrap_or_else(|| Expr::int(0))));
                offset = Some(match offset {
                    None => Expr::int(1),
                    Some(o) => match o.as_literal() {
                        Some(Literal::Int(k)) => Expr::int(k + 1),
                        _ => Expr::binary(BinaryOp::Add, o, Expr::int(1)),
                    },
                });
            }
        }
    }
    let direct: HashMap<String, Expr> = scalars.iter().filter(|(p, _)| !written.contains(p)).cloned().collect();

    let ctx = Ctx { active: &active, types: &types, arrays: &arrays, direct: &direct };
    // The first pass records what the backward code of each statement
    // reads; the second saves an overwritten value only when backward code
    // that runs later needs it.
    let mut probe = Gen::new(&ctx, None);
    let sweeps = probe.run(&body, &result)?;
    let mut read_back = reads(&sweeps.rev);
    read_back.extend(reads(&sweeps.seed));
    for a in &read_back {
        if types.get(a) == Some(&Type::DoubleArray) && written.contains(a) {
            return unsupported(format!("array `{a}` is modified and read when propagating adjoints"));
        }
    }
    let reassigned = written.iter().filter(|n| types.get(*n).is_some_and(|t| t.is_numeric())).cloned().collect();
    let out = Gen::new(&ctx, Some(Liveness { rev_reads: probe.rev_reads, reassigned, later: HashSet::new() })).run(&body, &result)?;

    let mut gbody = Vec::new();
    let zero = || Some(Expr::int(0));
    let params_then_locals = f.params.iter().filter(|p| p.ty == Type::Double).map(|p| p.name.clone());
    let params_then_locals = params_then_locals.chain(hoisted.iter().map(|(n, _)| n.clone())).chain(top_locals.iter().cloned());
    for n in params_then_locals {
        if active.contains(&n) && types[&n] == Type::Double && !direct.contains_key(&n) {
            gbody.push(Stmt::decl(shadow(&n), Type::Double, zero()));
        }
    }
    for (n, t) in &out.generated {
        gbody.push(Stmt::decl(n, *t, if *t == Type::Int { zero() } else { None }));
    }
    for (n, t) in &hoisted {
        gbody.push(Stmt::decl(n, *t, None));
    }
    gbody.extend(out.fwd);
    gbody.extend(out.seed);
    gbody.extend(out.rev);
    for (p, off) in &scalars {
        if !direct.contains_key(p) {
            gbody.push(Stmt::CompoundAssign { op: AssignOp::Add, target: result_slot(off.clone()), value: Expr::var(shadow(p), Type::Double) });
        }
    }
    gbody.push(Stmt::Return(Expr::double(0.0)));

    let mut params: Vec<Param> = f.params.iter().map(|p| Param { default: None, ..p.clone() }).collect();
    params.push(Param::new(RESULT, Type::DoubleArray));
    let gradient = FuncDef { name: gradient_name(&f.name), params, body: gbody, ret: Type::Double };
    Ok(GradFunc { original: f.clone(), gradient, mode: Mode::Reverse, layout })
}

fn array_len(req: &GradRequest, array: &str) -> Result<Expr, AdError> {
    if let Some((_, e)) = req.lengths.iter().find(|(a, _)| a == array) {
        return Ok(e.clone());
    }
    let ints: Vec<&Param> = req.func.params.iter().filter(|p| p.ty == Type::Int).collect();
    match ints.as_slice() {
        [p] => Ok(Expr::var(p.name.clone(), Type::Int)),
        _ => unsupported(format!("cannot tell the length of array `{array}`; give it explicitly")),
    }
}

fn result_slot(index: Expr) -> LValue {
    LValue::Index { array: RESULT.to_string(), index }
}

/// `v *= e` and `v /= e` become plain assignments.
fn desugar(body: &mut [Stmt], types: &HashMap<String, Type>) {
    for s in body {
        match s {
            Stmt::CompoundAssign { op: op @ (AssignOp::Mul | AssignOp::Div), target, value } => {
                let cur = match target {
                    LValue::Var(n) => Expr::var(n.clone(), types.get(n).copied().unwrap_or(Type::Double)),
                    LValue::Index { array, index } => Expr::index(array.clone(), index.clone()),
                };
                *s = Stmt::Assign { target: target.clone(), value: Expr::binary(op.binary(), cur, value.clone()) };
            }
            Stmt::For { body, .. } | Stmt::Replay { body, .. } | Stmt::Block(body) => desugar(body, types),
            Stmt::If { then_body, else_body, .. } => {
                desugar(then_body, types);
                if let Some(e) = else_body {
                    desugar(e, types);
                }
            }
            _ => {}
        }
    }
}

/// Move declarations that are nested, or whose name is declared more than
/// once, to the top of the function; the original site becomes an
/// assignment. Blocks are flattened.
fn hoist(body: Vec<Stmt>, hoisted: &mut Vec<(String, Type)>) -> Result<Vec<Stmt>, AdError> {
    let mut count: HashMap<String, usize> = HashMap::new();
    let mut counters = HashSet::new();
    walk_body(&body, &mut |s| match s {
        Stmt::Decl { name, .. } => *count.entry(name.clone()).or_default() += 1,
        Stmt::For { counter, .. } => {
            counters.insert(counter.clone());
        }
        _ => {}
    });
    for (n, _) in hoisted.iter() {
        *count.entry(n.clone()).or_default() += 1;
    }
    let keep = |n: &str| count.get(n) == Some(&1);
    let mut out = Vec::new();
    for s in body {
        match s {
            Stmt::Decl { ref name, .. } if keep(name) => out.push(s),
            s => nested(s, &mut out, hoisted)?,
        }
    }
    for (n, _) in hoisted.iter() {
        if counters.contains(n) {
            return unsupported(format!("`{n}` is both a loop counter and a variable"));
        }
    }
    Ok(out)
}

fn nested(s: Stmt, out: &mut Vec<Stmt>, hoisted: &mut Vec<(String, Type)>) -> Result<(), AdError> {
    let block = |b: Vec<Stmt>, hoisted: &mut Vec<(String, Type)>| -> Result<Vec<Stmt>, AdError> {
        let mut v = Vec::new();
        for s in b {
            nested(s, &mut v, hoisted)?;
        }
        Ok(v)
    };
    match s {
        Stmt::Decl { name, ty, init } => {
            match hoisted.iter().find(|(n, _)| *n == name) {
                Some((_, t)) if *t != ty => return unsupported(format!("`{name}` declared with two types")),
                Some(_) => {}
                None => hoisted.push((name.clone(), ty)),
            }
            let init = init.unwrap_or_else(|| if ty == Type::Int { Expr::int(0) } else { Expr::double(0.0) });
            out.push(Stmt::assign(name, init));
        }
        Stmt::For { counter, start, cond, body } => out.push(Stmt::For { counter, start, cond, body: block(body, hoisted)? }),
        Stmt::If { cond, then_body, else_body } => out.push(Stmt::If {
            cond,
            then_body: block(then_body, hoisted)?,
            else_body: else_body.map(|b| block(b, hoisted)).transpose()?,
        }),
        Stmt::Block(b) => out.extend(block(b, hoisted)?),
        s => out.push(s),
    }
    Ok(())
}

struct Ctx<'a> {
    active: &'a HashSet<String>,
    types: &'a HashMap<String, Type>,
    /// wrt arrays and the `_result` offset of their first slot
    arrays: &'a HashMap<String, Option<Expr>>,
    /// wrt scalars never assigned in the body: adjoints go straight to
    /// their `_result` slot
    direct: &'a HashMap<String, Expr>,
}

/// What the backward sweep reads, gathered by the probing pass.
struct Liveness {
    rev_reads: HashMap<*const Stmt, HashSet<String>>,
    reassigned: HashSet<String>,
    /// names read by backward code that runs after the current statement's
    later: HashSet<String>,
}

struct Gen<'a> {
    ctx: &'a Ctx<'a>,
    /// `None` while probing
    live: Option<Liveness>,
    rev_reads: HashMap<*const Stmt, HashSet<String>>,
    /// counters and tapes in the order their `_t<k>` names were handed out
    generated: Vec<(String, Type)>,
    int_tape: Option<String>,
    dbl_tape: Option<String>,
    next_snapshot: usize,
    next_temp: usize,
    depth: usize,
}

struct Sweeps {
    generated: Vec<(String, Type)>,
    fwd: Vec<Stmt>,
    seed: Vec<Stmt>,
    rev: Vec<Stmt>,
}

impl<'a> Gen<'a> {
    fn new(ctx: &'a Ctx<'a>, live: Option<Liveness>) -> Self {
        Gen { ctx, live, rev_reads: HashMap::new(), generated: Vec::new(), int_tape: None, dbl_tape: None, next_snapshot: 0, next_temp: 0, depth: 0 }
    }

    fn run(&mut self, body: &[Stmt], result: &Expr) -> Result<Sweeps, AdError> {
        let (fwd, rev) = self.block(body)?;
        let mut seed = Vec::new();
        self.propagate(result, Expr::int(1), &mut seed)?;
        Ok(Sweeps { generated: std::mem::take(&mut self.generated), fwd, seed, rev })
    }

    fn fresh_t(&mut self, ty: Type) -> String {
        let name = format!("_t{}", self.generated.len());
        self.generated.push((name.clone(), ty));
        name
    }

    fn tape(&mut self, elem: Type) -> (String, Type) {
        if elem == Type::Int {
            if self.int_tape.is_none() {
                self.int_tape = Some(self.fresh_t(Type::IntTape));
            }
            (self.int_tape.clone().unwrap(), Type::IntTape)
        } else {
            if self.dbl_tape.is_none() {
                self.dbl_tape = Some(self.fresh_t(Type::DoubleTape));
            }
            (self.dbl_tape.clone().unwrap(), Type::DoubleTape)
        }
    }

    fn push(&mut self, value: Expr) -> Stmt {
        let (t, tt) = self.tape(value.ty);
        Stmt::Expr(Expr::push(&t, tt, value))
    }

    fn pop(&mut self, elem: Type) -> Expr {
        let (t, tt) = self.tape(elem);
        Expr::pop(&t, tt)
    }

    fn active(&self, e: &Expr) -> bool {
        is_active(e, self.ctx.active)
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(Vec<Stmt>, Vec<Stmt>), AdError> {
        let mut fwd = Vec::new();
        let mut revs = Vec::new();
        let outer = self.live.as_ref().map(|l| l.later.clone());
        for s in body {
            let mut rev = Vec::new();
            self.stmt(s, &mut fwd, &mut rev)?;
            match &mut self.live {
                None => {
                    self.rev_reads.insert(s as *const Stmt, reads(&rev));
                }
                Some(l) => {
                    let r = l.rev_reads[&(s as *const Stmt)].clone();
                    l.later.extend(r);
                }
            }
            revs.push(rev);
        }
        if let (Some(l), Some(outer)) = (&mut self.live, outer) {
            l.later = outer;
        }
        Ok((fwd, revs.into_iter().rev().flatten().collect()))
    }

    /// Save `v` before `s` overwrites it and restore it on the way back.
    fn save(&mut self, s: &Stmt, v: &str, fwd: &mut Vec<Stmt>, rev: &mut Vec<Stmt>) {
        let needed = self.live.as_ref().is_some_and(|l| {
            l.reassigned.contains(v) && (l.later.contains(v) || l.rev_reads[&(s as *const Stmt)].contains(v))
        });
        if needed {
            let ty = self.ctx.types[v];
            fwd.push(self.push(Expr::var(v, ty)));
            let pop = self.pop(ty);
            rev.push(Stmt::assign(v, pop));
        }
    }

    fn snapshot(&mut self, v: &str, rev: &mut Vec<Stmt>) -> Expr {
        let name = format!("_r_d{}", self.next_snapshot);
        self.next_snapshot += 1;
        rev.push(Stmt::decl(&name, Type::Double, Some(Expr::var(shadow(v), Type::Double))));
        Expr::var(name, Type::Double)
    }

    fn stmt(&mut self, s: &Stmt, fwd: &mut Vec<Stmt>, rev: &mut Vec<Stmt>) -> Result<(), AdError> {
        let tracked = |v: &String| self.ctx.active.contains(v) && self.ctx.types.get(v) == Some(&Type::Double);
        match s {
            Stmt::Decl { name, init, .. } => {
                fwd.push(s.clone());
                if let Some(e) = init {
                    if tracked(name) && self.active(e) {
                        self.propagate(e, Expr::var(shadow(name), Type::Double), rev)?;
                    }
                }
            }
            Stmt::Assign { target: LValue::Var(v), value } => {
                self.save(s, v, fwd, rev);
                fwd.push(s.clone());
                if tracked(v) {
                    if self.active(value) {
                        let r = self.snapshot(v, rev);
                        rev.push(Stmt::assign(shadow(v), Expr::int(0)));
                        self.propagate(value, r, rev)?;
                    } else {
                        rev.push(Stmt::assign(shadow(v), Expr::int(0)));
                    }
                }
            }
            Stmt::CompoundAssign { op, target: LValue::Var(v), value } => {
                self.save(s, v, fwd, rev);
                fwd.push(s.clone());
                if tracked(v) && self.active(value) {
                    let r = self.snapshot(v, rev);
                    let r = if *op == AssignOp::Sub { neg(r) } else { r };
                    self.propagate(value, r, rev)?;
                }
            }
            Stmt::Assign { target: LValue::Index { array, .. }, value } | Stmt::CompoundAssign { target: LValue::Index { array, .. }, value, .. } => {
                if self.ctx.arrays.contains_key(array) {
                    return unsupported(format!("assignment to the differentiation array `{array}`"));
                }
                if self.active(value) {
                    return unsupported(format!("storing a differentiated value into array `{array}`"));
                }
                fwd.push(s.clone());
            }
            Stmt::For { counter, start, cond, body } => {
                let t = self.fresh_t(Type::Int);
                // later iterations run their backward code after this one
                let saved = self.live.as_mut().map(|l| {
                    let before = l.later.clone();
                    let whole = l.rev_reads[&(s as *const Stmt)].clone();
                    l.later.extend(whole);
                    before
                });
                self.depth += 1;
                let (bf, br) = self.block(body)?;
                self.depth -= 1;
                if let (Some(l), Some(before)) = (&mut self.live, saved) {
                    l.later = before;
                }
                let mut fbody = vec![Stmt::compound(AssignOp::Add, &t, Expr::int(1))];
                fbody.extend(bf);
                let mut rbody = Vec::new();
                if reads(&br).contains(counter) {
                    fbody.push(self.push(Expr::var(counter, Type::Int)));
                    let pop = self.pop(Type::Int);
                    rbody.push(Stmt::decl(counter, Type::Int, Some(pop)));
                }
                rbody.extend(br);
                fwd.push(Stmt::assign(&t, Expr::int(0)));
                fwd.push(Stmt::For { counter: counter.clone(), start: start.clone(), cond: cond.clone(), body: fbody });
                if self.depth > 0 {
                    fwd.push(self.push(Expr::var(&t, Type::Int)));
                    let pop = self.pop(Type::Int);
                    rev.push(Stmt::assign(&t, pop));
                }
                rev.push(Stmt::Replay { counter: t, body: rbody });
            }
            Stmt::If { cond, then_body, else_body } => {
                let (mut tf, tr) = self.block(then_body)?;
                let (mut ef, er) = self.block(else_body.as_deref().unwrap_or_default())?;
                if tr.is_empty() && er.is_empty() {
                    let else_body = if ef.is_empty() { None } else { Some(ef) };
                    fwd.push(Stmt::If { cond: cond.clone(), then_body: tf, else_body });
                } else {
                    tf.push(self.push(Expr::int(1)));
                    ef.push(self.push(Expr::int(0)));
                    fwd.push(Stmt::If { cond: cond.clone(), then_body: tf, else_body: Some(ef) });
                    let sel = self.pop(Type::Int);
                    rev.push(Stmt::If { cond: sel, then_body: tr, else_body: if er.is_empty() { None } else { Some(er) } });
                }
            }
            Stmt::Block(b) => {
                let (bf, br) = self.block(b)?;
                fwd.extend(bf);
                rev.extend(br);
            }
            Stmt::Return(_) | Stmt::Replay { .. } | Stmt::Expr(_) => return unsupported("control flow the gradient cannot replay"),
        }
        Ok(())
    }

    /// Bind a composite adjoint to a temporary so it is computed once.
    fn materialize(&mut self, adj: Expr, rev: &mut Vec<Stmt>) -> Expr {
        let simple = |e: &Expr| matches!(e.kind, ExprKind::Var(_) | ExprKind::Literal(_));
        if simple(&adj) || strip_neg(&adj).is_some_and(simple) {
            return adj;
        }
        let name = format!("_r{}", self.next_temp);
        self.next_temp += 1;
        rev.push(Stmt::decl(&name, Type::Double, Some(adj)));
        Expr::var(name, Type::Double)
    }

    fn sink(&self, target: LValue, adj: Expr, rev: &mut Vec<Stmt>) {
        let (op, value) = match strip_neg(&adj) {
            Some(x) => (AssignOp::Sub, x.clone()),
            None => (AssignOp::Add, adj),
        };
        rev.push(Stmt::CompoundAssign { op, target, value });
    }

    /// Emit statements adding `adj * d e / d x` to the adjoint of every
    /// active `x` read by `e`.
    fn propagate(&mut self, e: &Expr, adj: Expr, rev: &mut Vec<Stmt>) -> Result<(), AdError> {
        if !self.active(e) {
            return Ok(());
        }
        match &e.kind {
            ExprKind::Var(v) => {
                let target = match self.ctx.direct.get(v) {
                    Some(off) => result_slot(off.clone()),
                    None => LValue::Var(shadow(v)),
                };
                self.sink(target, adj, rev);
            }
            ExprKind::Index { array, index } => {
                let idx = (**index).clone();
                let at = match &self.ctx.arrays[array] {
                    None => idx,
                    Some(off) => Expr::binary(BinaryOp::Add, off.clone(), idx),
                };
                self.sink(result_slot(at), adj, rev);
            }
            ExprKind::Unary { operand, .. } => self.propagate(operand, neg(adj), rev)?,
            ExprKind::Binary { op, lhs, rhs } => {
                let (la, ra) = (self.active(lhs), self.active(rhs));
                let adj = if la && ra { self.materialize(adj, rev) } else { adj };
                let (a, b) = ((**lhs).clone(), (**rhs).clone());
                match op {
                    BinaryOp::Add => {
                        self.propagate(lhs, adj.clone(), rev)?;
                        self.propagate(rhs, adj, rev)?;
                    }
                    BinaryOp::Sub => {
                        self.propagate(lhs, adj.clone(), rev)?;
                        self.propagate(rhs, neg(adj), rev)?;
                    }
                    BinaryOp::Mul => {
                        if la {
                            self.propagate(lhs, mul(adj.clone(), b.clone()), rev)?;
                        }
                        if ra {
                            self.propagate(rhs, mul(a, adj), rev)?;
                        }
                    }
                    BinaryOp::Div => {
                        if la {
                            self.propagate(lhs, div(adj.clone(), b.clone()), rev)?;
                        }
                        if ra {
                            let d = neg(div(mul(adj, a), mul(b.clone(), b)));
                            self.propagate(rhs, d, rev)?;
                        }
                    }
                    _ => {}
                }
            }
            ExprKind::Call { callee: Callee::Intrinsic(f), args } => {
                let a = args[0].clone();
                match f {
                    Intrinsic::Sin => self.propagate(&a, mul(adj, Expr::intrinsic(Intrinsic::Cos, vec![a.clone()])), rev)?,
                    Intrinsic::Cos => {
                        self.propagate(&a, neg(mul(adj, Expr::intrinsic(Intrinsic::Sin, vec![a.clone()]))), rev)?
                    }
                    Intrinsic::Exp => self.propagate(&a, mul(adj, e.clone()), rev)?,
                    Intrinsic::Log => self.propagate(&a, div(adj, a.clone()), rev)?,
                    Intrinsic::Sqrt => self.propagate(&a, div(adj, mul(Expr::double(2.0), e.clone())), rev)?,
                    Intrinsic::Pow => {
                        let b = args[1].clone();
                        let (la, lb) = (self.active(&a), self.active(&b));
                        let adj = if la && lb { self.materialize(adj, rev) } else { adj };
                        if la {
                            let p = Expr::intrinsic(Intrinsic::Pow, vec![a.clone(), minus_one(&b)]);
                            self.propagate(&a, mul(adj.clone(), mul(b.clone(), p)), rev)?;
                        }
                        if lb {
                            let log_a = Expr::intrinsic(Intrinsic::Log, vec![a.clone()]);
                            self.propagate(&b, mul(adj, mul(e.clone(), log_a)), rev)?;
                        }
                    }
                }
            }
            ExprKind::Call { callee, .. } => return unsupported(format!("call to `{}`", callee.name())),
            ExprKind::Literal(_) | ExprKind::Const(_) => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Array, CompiledProgram, Interpreter};
    use crate::parser::parse;

    const SUM: &str = "double sum(double* p, int dim) { double r = 0.0; for (int i = 0; i < dim; i++) r += p[i]; return r; }";

    /// Runs the printed gradient (so printing and re-parsing are exercised
    /// too) and returns `_result`.
    fn grad(src: &str, f: &str, wrt: &[&str], args: &[Value], slots: usize) -> Vec<f64> {
        let text = gradient_source(src, f, wrt).unwrap();
        let p = parse(&text).unwrap_or_else(|e| panic!("{e:?}\n{text}"));
        assert!(crate::validate::validate(&p).is_empty(), "{text}");
        let out = Array::zeros(slots);
        let mut all = args.to_vec();
        all.push(Value::Arr(out.clone()));
        let c = CompiledProgram::new(&p).unwrap();
        let mut it = Interpreter::new(&c);
        assert_eq!(it.call(&gradient_name(f), &all), Ok(0.0), "{text}");
        assert_eq!(it.last_tape_residue(), 0);
        out.to_vec()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let p = Value::array(&[0.3, -1.0, 2.0, 4.0, 5.0]);
        assert_eq!(grad(SUM, "sum", &["p"], &[p, Value::I(5)], 5), vec![1.0; 5]);
    }

    #[test]
    fn identity_writes_straight_into_result() {
        let text = gradient_source("double f(double x) { return x; }", "f", &["x"]).unwrap();
        assert!(text.contains("_result[0] += 1;"), "{text}");
    }

    #[test]
    fn overwritten_values_are_restored() {
        let src = "double f(double x, int n) {
            double y = 1; double s = 0;
            for (int i = 0; i < n; i++) { y = y * x; s += sin(y); }
            y = y * y;
            return s + y;
        }";
        let x = 0.9f64;
        // s = sum sin(x^k), k=1..3; y = x^6
        let want: f64 = (1..=3).map(|k| k as f64 * x.powi(k - 1) * x.powi(k).cos()).sum::<f64>() + 6.0 * x.powi(5);
        let got = grad(src, "f", &["x"], &[Value::D(x), Value::I(3)], 1);
        assert!((got[0] - want).abs() < 1e-14, "{got:?} {want}");
    }

    #[test]
    fn branches_nested_loops_and_early_returns() {
        let src = "double f(double* p, double c, int n) {
            double s = 0;
            for (int i = 0; i < n; i++) {
                for (int j = 0; j <= i; j++) {
                    if (p[j] > 0) { s += p[j] * c; } else { double t = p[j] * p[j]; s -= t; }
                }
            }
            if (s < 0) { return -s; }
            return s * c;
        }";
        let pv = [0.5, -2.0, 1.5];
        let c = 1.25;
        // s = sum_i sum_{j<=i} g(p_j), g = c p if p > 0 else -p^2
        let s: f64 = (0..3).map(|i| (0..=i).map(|j: usize| if pv[j] > 0.0 { pv[j] * c } else { -pv[j] * pv[j] }).sum::<f64>()).sum();
        assert!(s < 0.0);
        let mult = |j: usize| (3 - j) as f64;
        let want: Vec<f64> = (0..3)
            .map(|j| -mult(j) * if pv[j] > 0.0 { c } else { -2.0 * pv[j] })
            .chain([-(0..3).map(|j| if pv[j] > 0.0 { mult(j) * pv[j] } else { 0.0 }).sum::<f64>()])
            .collect();
        let got = grad(src, "f", &["p", "c"], &[Value::array(&pv), Value::D(c), Value::I(3)], 4);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14, "{got:?} {want:?}");
        }
    }

    #[test]
    fn calls_are_inlined() {
        let src = "double sq(double t) { return t * t; }
                   double f(double x, double y) { return sq(x) * y + sq(y); }";
        assert_eq!(grad(src, "f", &[], &[Value::D(3.0), Value::D(2.0)], 2), vec![12.0, 9.0 + 4.0]);
    }

    #[test]
    fn layout_puts_arrays_first() {
        let p = parse("double f(double s, double* p, int n) { return s * p[0]; }").unwrap();
        let g = gradient(&GradRequest::new(p.functions[0].clone(), ["s", "p"])).unwrap();
        assert_eq!(g.layout, vec![SlotGroup::Array("p".into()), SlotGroup::Scalar("s".into())]);
        let args = [Value::D(2.0), Value::array(&[1.0, 1.0]), Value::I(2)];
        assert_eq!(g.result_len(&args), Some(3));
        assert_eq!(g.slot_labels(&args), vec!["p[0]", "p[1]", "s"]);
    }

    #[test]
    fn request_errors() {
        let f = parse("double f(double x, int n, double* a) { a[0] = x; return x; }").unwrap().functions[0].clone();
        let err = |w: &[&str]| gradient(&GradRequest::new(f.clone(), w.iter().copied())).unwrap_err();
        assert_eq!(err(&["y"]), AdError::UnknownParameter("y".into()));
        assert!(matches!(err(&["n"]), AdError::UnsupportedConstruct(_)));
        assert!(matches!(err(&["x"]), AdError::UnsupportedConstruct(_)));
        assert!(matches!(err(&[]), AdError::UnsupportedConstruct(_)));
    }

    #[test]
    fn print_sum() {
        println!("{}", gradient_source(SUM, "sum", &["p"]).unwrap());
        let mvn = "double mvn(double* x, double* p, double sigma, int dim) {
    double t = 0;
    for (int i = 0; i < dim; i++)
        t += (x[i] - p[i])*(x[i] - p[i]);
    t = -t / (2*sigma*sigma);
    return pow(2*M_PI, -dim/2.0) * pow(sigma, -0.5) * exp(t);
}";
        println!("{}", gradient_source(mvn, "mvn", &["p", "sigma"]).unwrap());
    }
}
