//! Expression evaluation and program execution producing traces.
//!
//! Values follow Python semantics for the supported operations: `/` is
//! true division, `%` takes the sign of the divisor, `and`/`or` return an
//! operand, and integer arithmetic is checked for overflow.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{Expr, Ident, LocId, Memory, Op, Program, Step, Target, Trace, Value, COND};

pub const DEFAULT_STEP_LIMIT: usize = 100_000;

/// Upper bound on list lengths produced by evaluation.
const MAX_LIST_LEN: usize = 1_000_000;
/// Upper bound on the total number of value cells stored in one trace.
const MAX_TRACE_CELLS: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct EvalError {
    pub message: String,
}

fn err<T>(message: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError { message: message.into() })
}

/// One test input: values bound positionally to a program's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub name: String,
    pub args: Vec<(Ident, Value)>,
}

impl Input {
    pub fn new(name: impl Into<String>, args: Vec<(Ident, Value)>) -> Input {
        Input { name: name.into(), args }
    }
}

/// Non-empty ordered list of inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSet {
    inputs: Vec<Input>,
}

impl InputSet {
    pub fn new(inputs: Vec<Input>) -> Result<InputSet, EvalError> {
        if inputs.is_empty() {
            return err("an input set must contain at least one input");
        }
        Ok(InputSet { inputs })
    }

    pub fn inputs(&self) -> &[Input] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Ok(Trace),
    /// `var` names the variable whose label failed, when there is one.
    Error { step: usize, var: Option<Ident>, message: String },
    StepLimit,
}

impl RunOutcome {
    pub fn trace(&self) -> Option<&Trace> {
        match self {
            RunOutcome::Ok(t) => Some(t),
            _ => None,
        }
    }

    pub fn into_trace(self) -> Option<Trace> {
        match self {
            RunOutcome::Ok(t) => Some(t),
            _ => None,
        }
    }

    pub fn return_value(&self) -> Option<Value> {
        self.trace().map(Trace::return_value)
    }
}

pub fn truthy(v: &Value) -> Result<bool, EvalError> {
    Ok(match v {
        Value::Bool(b) => *b,
        Value::Int(i) => *i != 0,
        Value::Float(x) => *x != 0.0,
        Value::Str(s) => !s.is_empty(),
        Value::List(l) => !l.is_empty(),
        Value::Undef => return err("truth value of an undefined value"),
    })
}

enum Num {
    I(i64),
    F(f64),
}

fn num(v: &Value, op: &str) -> Result<Num, EvalError> {
    match v {
        Value::Int(i) => Ok(Num::I(*i)),
        Value::Bool(b) => Ok(Num::I(*b as i64)),
        Value::Float(x) => Ok(Num::F(*x)),
        other => err(format!("unsupported operand type {} for {op}", other.type_name())),
    }
}

fn as_f64(n: &Num) -> f64 {
    match n {
        Num::I(i) => *i as f64,
        Num::F(x) => *x,
    }
}

fn overflow<T>() -> Result<T, EvalError> {
    err("integer overflow")
}

fn arith(op: Op, a: &Value, b: &Value) -> Result<Value, EvalError> {
    let sym = op.name();
    match (op, a, b) {
        (Op::Add, Value::Str(x), Value::Str(y)) => return Ok(Value::Str(format!("{x}{y}"))),
        (Op::Add, Value::List(x), Value::List(y)) => {
            check_len(x.len() + y.len())?;
            return Ok(Value::List(x.iter().chain(y).cloned().collect()));
        }
        (Op::Mul, Value::List(x), Value::Int(n)) | (Op::Mul, Value::Int(n), Value::List(x)) => {
            let n = (*n).max(0) as usize;
            check_len(x.len().saturating_mul(n))?;
            return Ok(Value::List(x.iter().cloned().cycle().take(x.len() * n).collect()));
        }
        (Op::Mul, Value::Str(x), Value::Int(n)) | (Op::Mul, Value::Int(n), Value::Str(x)) => {
            let n = (*n).max(0) as usize;
            check_len(x.len().saturating_mul(n))?;
            return Ok(Value::Str(x.repeat(n)));
        }
        _ => {}
    }
    let (x, y) = (num(a, sym)?, num(b, sym)?);
    match (op, &x, &y) {
        (Op::Add, Num::I(p), Num::I(q)) => p.checked_add(*q).map(Value::Int).map_or_else(overflow, Ok),
        (Op::Sub, Num::I(p), Num::I(q)) => p.checked_sub(*q).map(Value::Int).map_or_else(overflow, Ok),
        (Op::Mul, Num::I(p), Num::I(q)) => p.checked_mul(*q).map(Value::Int).map_or_else(overflow, Ok),
        (Op::Add, ..) => Ok(Value::Float(as_f64(&x) + as_f64(&y))),
        (Op::Sub, ..) => Ok(Value::Float(as_f64(&x) - as_f64(&y))),
        (Op::Mul, ..) => Ok(Value::Float(as_f64(&x) * as_f64(&y))),
        (Op::Div, ..) => {
            let d = as_f64(&y);
            if d == 0.0 {
                return err("division by zero");
            }
            Ok(Value::Float(as_f64(&x) / d))
        }
        (Op::Mod, Num::I(p), Num::I(q)) => {
            if *q == 0 {
                return err("modulo by zero");
            }
            let r = p.checked_rem(*q).map_or_else(overflow, Ok)?;
            Ok(Value::Int(if r != 0 && ((r < 0) != (*q < 0)) { r + q } else { r }))
        }
        (Op::Mod, ..) => {
            let (p, q) = (as_f64(&x), as_f64(&y));
            if q == 0.0 {
                return err("modulo by zero");
            }
            let r = p % q;
            Ok(Value::Float(if r != 0.0 && ((r < 0.0) != (q < 0.0)) { r + q } else { r }))
        }
        (Op::Pow, Num::I(p), Num::I(q)) if *q >= 0 => {
            let e = u32::try_from(*q).map_err(|_| EvalError { message: "integer overflow".into() })?;
            p.checked_pow(e).map(Value::Int).map_or_else(overflow, Ok)
        }
        (Op::Pow, ..) => {
            let (p, q) = (as_f64(&x), as_f64(&y));
            if p == 0.0 && q < 0.0 {
                return err("zero cannot be raised to a negative power");
            }
            Ok(Value::Float(p.powf(q)))
        }
        _ => err(format!("unsupported arithmetic operation {sym}")),
    }
}

fn check_len(n: usize) -> Result<(), EvalError> {
    if n > MAX_LIST_LEN {
        return err(format!("list length {n} exceeds the limit of {MAX_LIST_LEN}"));
    }
    Ok(())
}

fn compare(a: &Value, b: &Value) -> Result<Ordering, EvalError> {
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => Ok(x.cmp(y)),
        (Value::List(x), Value::List(y)) => {
            for (p, q) in x.iter().zip(y) {
                if p != q {
                    return compare(p, q);
                }
            }
            Ok(x.len().cmp(&y.len()))
        }
        _ => {
            if a == b {
                return Ok(Ordering::Equal);
            }
            let (x, y) = (num(a, "comparison")?, num(b, "comparison")?);
            match (x, y) {
                (Num::I(p), Num::I(q)) => Ok(p.cmp(&q)),
                (x, y) => as_f64(&x)
                    .partial_cmp(&as_f64(&y))
                    .map_or_else(|| err("comparison with NaN"), Ok),
            }
        }
    }
}

fn int_arg(v: &Value, what: &str) -> Result<i64, EvalError> {
    match v {
        Value::Int(i) => Ok(*i),
        Value::Bool(b) => Ok(*b as i64),
        other => err(format!("{what} must be an integer, not {}", other.type_name())),
    }
}

fn normalize_index(i: i64, len: usize) -> Option<usize> {
    let len = len as i64;
    let j = if i < 0 { i + len } else { i };
    (0..len).contains(&j).then_some(j as usize)
}

fn slice_bounds(lo: &Value, hi: &Value, len: usize) -> Result<(usize, usize), EvalError> {
    let clamp = |v: &Value, default: usize| -> Result<usize, EvalError> {
        if v.is_undef() {
            return Ok(default);
        }
        let i = int_arg(v, "slice index")?;
        let l = len as i64;
        let j = if i < 0 { (i + l).max(0) } else { i.min(l) };
        Ok(j as usize)
    };
    let a = clamp(lo, 0)?;
    let b = clamp(hi, len)?;
    Ok((a, b.max(a)))
}

fn items(v: &Value, what: &str) -> Result<Vec<Value>, EvalError> {
    match v {
        Value::List(l) => Ok(l.clone()),
        Value::Str(s) => Ok(s.chars().map(|c| Value::Str(c.to_string())).collect()),
        other => err(format!("{what} expects a list, not {}", other.type_name())),
    }
}

fn extremum(args: Vec<Value>, want: Ordering, name: &str) -> Result<Value, EvalError> {
    let candidates = if args.len() == 1 { items(&args[0], name)? } else { args };
    let mut it = candidates.into_iter();
    let Some(mut best) = it.next() else {
        return err(format!("{name}() of an empty sequence"));
    };
    for v in it {
        if compare(&v, &best)? == want {
            best = v;
        }
    }
    Ok(best)
}

/// Evaluates `e` under `m`: unprimed names read pre-values, primed names
/// post-values; unbound names are `Undef`.
pub fn eval(e: &Expr, m: &Memory) -> Result<Value, EvalError> {
    match e {
        Expr::Var(v) => Ok(m.get(v).clone()),
        Expr::Primed(v) => Ok(m.get_post(v).clone()),
        Expr::Const(c) => Ok(c.clone()),
        Expr::Op(op, args) => eval_op(*op, args, m),
    }
}

fn eval_op(op: Op, args: &[Expr], m: &Memory) -> Result<Value, EvalError> {
    if !op.arity().accepts(args.len()) {
        return err(format!("{} applied to {} arguments", op.name(), args.len()));
    }
    match op {
        Op::Ite => {
            let g = eval(&args[0], m)?;
            return if truthy(&g)? { eval(&args[1], m) } else { eval(&args[2], m) };
        }
        Op::And => {
            let a = eval(&args[0], m)?;
            return if truthy(&a)? { eval(&args[1], m) } else { Ok(a) };
        }
        Op::Or => {
            let a = eval(&args[0], m)?;
            return if truthy(&a)? { Ok(a) } else { eval(&args[1], m) };
        }
        _ => {}
    }
    let vals = args.iter().map(|a| eval(a, m)).collect::<Result<Vec<_>, _>>()?;
    apply(op, vals)
}

/// Applies a strict operation to already evaluated arguments.
pub fn apply(op: Op, mut vals: Vec<Value>) -> Result<Value, EvalError> {
    let v = &vals;
    match op {
        Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod | Op::Pow => arith(op, &v[0], &v[1]),
        Op::Neg => match num(&v[0], "unary -")? {
            Num::I(i) => i.checked_neg().map(Value::Int).map_or_else(overflow, Ok),
            Num::F(x) => Ok(Value::Float(-x)),
        },
        Op::Not => Ok(Value::Bool(!truthy(&v[0])?)),
        Op::Eq => Ok(Value::Bool(v[0] == v[1])),
        Op::Ne => Ok(Value::Bool(v[0] != v[1])),
        Op::Lt => Ok(Value::Bool(compare(&v[0], &v[1])? == Ordering::Less)),
        Op::Le => Ok(Value::Bool(compare(&v[0], &v[1])? != Ordering::Greater)),
        Op::Gt => Ok(Value::Bool(compare(&v[0], &v[1])? == Ordering::Greater)),
        Op::Ge => Ok(Value::Bool(compare(&v[0], &v[1])? != Ordering::Less)),
        Op::Index => {
            let i = int_arg(&v[1], "index")?;
            match &v[0] {
                Value::List(l) => match normalize_index(i, l.len()) {
                    Some(j) => Ok(l[j].clone()),
                    None => err(format!("list index {i} out of range (length {})", l.len())),
                },
                Value::Str(s) => {
                    let chars: Vec<char> = s.chars().collect();
                    match normalize_index(i, chars.len()) {
                        Some(j) => Ok(Value::Str(chars[j].to_string())),
                        None => err(format!("string index {i} out of range (length {})", chars.len())),
                    }
                }
                other => err(format!("{} is not indexable", other.type_name())),
            }
        }
        Op::Slice => match &v[0] {
            Value::List(l) => {
                let (a, b) = slice_bounds(&v[1], &v[2], l.len())?;
                Ok(Value::List(l[a..b].to_vec()))
            }
            Value::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let (a, b) = slice_bounds(&v[1], &v[2], chars.len())?;
                Ok(Value::Str(chars[a..b].iter().collect()))
            }
            other => err(format!("{} cannot be sliced", other.type_name())),
        },
        Op::MakeList => Ok(Value::List(vals)),
        Op::Ite | Op::And | Op::Or => unreachable!("lazy operations are handled by eval"),
        Op::Len => match &v[0] {
            Value::List(l) => Ok(Value::Int(l.len() as i64)),
            Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
            other => err(format!("{} has no len()", other.type_name())),
        },
        Op::Append => {
            let x = vals.pop().unwrap();
            match vals.pop().unwrap() {
                Value::List(mut l) => {
                    check_len(l.len() + 1)?;
                    l.push(x);
                    Ok(Value::List(l))
                }
                other => err(format!("append() expects a list, not {}", other.type_name())),
            }
        }
        Op::Insert => {
            let x = vals.pop().unwrap();
            let i = int_arg(&vals.pop().unwrap(), "insert position")?;
            match vals.pop().unwrap() {
                Value::List(mut l) => {
                    check_len(l.len() + 1)?;
                    let n = l.len() as i64;
                    let pos = if i < 0 { (i + n).max(0) } else { i.min(n) };
                    l.insert(pos as usize, x);
                    Ok(Value::List(l))
                }
                other => err(format!("insert() expects a list, not {}", other.type_name())),
            }
        }
        Op::Concat => match (&v[0], &v[1]) {
            (Value::List(_), Value::List(_)) | (Value::Str(_), Value::Str(_)) => arith(Op::Add, &v[0], &v[1]),
            (a, b) => err(format!("concat() expects two lists, not {} and {}", a.type_name(), b.type_name())),
        },
        Op::Float => match &v[0] {
            Value::Int(i) => Ok(Value::Float(*i as f64)),
            Value::Bool(b) => Ok(Value::Float(*b as i64 as f64)),
            Value::Float(x) => Ok(Value::Float(*x)),
            Value::Str(s) => s
                .trim()
                .parse::<f64>()
                .map(Value::Float)
                .map_err(|_| EvalError { message: format!("could not convert string to float: {s:?}") }),
            other => err(format!("float() argument must be a number, not {}", other.type_name())),
        },
        Op::Int => match &v[0] {
            Value::Int(i) => Ok(Value::Int(*i)),
            Value::Bool(b) => Ok(Value::Int(*b as i64)),
            Value::Float(x) => {
                if !x.is_finite() || x.abs() >= 9.2e18 {
                    return err("cannot convert float to integer");
                }
                Ok(Value::Int(x.trunc() as i64))
            }
            Value::Str(s) => s
                .trim()
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| EvalError { message: format!("invalid literal for int(): {s:?}") }),
            other => err(format!("int() argument must be a number, not {}", other.type_name())),
        },
        Op::Abs => match num(&v[0], "abs()")? {
            Num::I(i) => i.checked_abs().map(Value::Int).map_or_else(overflow, Ok),
            Num::F(x) => Ok(Value::Float(x.abs())),
        },
        Op::Min => extremum(vals, Ordering::Less, "min"),
        Op::Max => extremum(vals, Ordering::Greater, "max"),
        Op::Range => {
            let (a, b) = if v.len() == 1 {
                (0, int_arg(&v[0], "range() argument")?)
            } else {
                (int_arg(&v[0], "range() argument")?, int_arg(&v[1], "range() argument")?)
            };
            let n = if b > a { (b - a) as u64 } else { 0 };
            if n > MAX_LIST_LEN as u64 {
                return err(format!("range of {n} elements exceeds the limit"));
            }
            Ok(Value::List((a..b.max(a)).map(Value::Int).collect()))
        }
        Op::List => {
            if v.is_empty() {
                Ok(Value::List(Vec::new()))
            } else {
                items(&v[0], "list()").map(Value::List)
            }
        }
        Op::IndexOf => match &v[0] {
            Value::List(l) => match l.iter().position(|x| *x == v[1]) {
                Some(i) => Ok(Value::Int(i as i64)),
                None => err(format!("{} is not in list", v[1])),
            },
            other => err(format!("index() expects a list, not {}", other.type_name())),
        },
    }
}

/// Order in which the explicit labels of a location are evaluated:
/// topological in primed dependencies, ties broken by source order.
pub fn evaluation_order(p: &Program, loc: LocId) -> Result<Vec<Ident>, EvalError> {
    let l = p.loc(loc);
    let mut rank: BTreeMap<&str, usize> = BTreeMap::new();
    for v in l.order.iter().chain(p.vars.iter()).chain(l.labels.keys()) {
        let n = rank.len();
        rank.entry(v.as_str()).or_insert(n);
    }
    let deps: BTreeMap<&str, BTreeSet<String>> = l
        .labels
        .iter()
        .map(|(v, e)| {
            let d = e.primed_vars().into_iter().filter(|x| x != v && l.labels.contains_key(x)).collect();
            (v.as_str(), d)
        })
        .collect();
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::with_capacity(deps.len());
    while out.len() < deps.len() {
        let next = deps
            .iter()
            .filter(|(v, d)| !done.contains(**v) && d.iter().all(|x| done.contains(x.as_str())))
            .min_by_key(|(v, _)| rank[**v]);
        match next {
            Some((v, _)) => {
                done.insert(v);
                out.push(v.to_string());
            }
            None => {
                let rest: Vec<&str> = deps.keys().copied().filter(|v| !done.contains(v)).collect();
                return err(format!("cyclic primed dependencies at {loc} among {}", rest.join(", ")));
            }
        }
    }
    Ok(out)
}

/// Executes one location: post-values of all variables given pre-values.
fn step_location(p: &Program, loc: LocId, order: &[Ident], pre: BTreeMap<Ident, Value>) -> Result<Memory, (Ident, EvalError)> {
    let l = p.loc(loc);
    let mut mem = Memory { pre, post: BTreeMap::new() };
    for v in &p.vars {
        if !l.labels.contains_key(v) {
            let val = mem.get(v).clone();
            mem.post.insert(v.clone(), val);
        }
    }
    for v in order {
        let val = eval(&l.labels[v], &mem)
            .map_err(|e| (v.clone(), EvalError { message: format!("{} (assigning {v})", e.message) }))?;
        mem.post.insert(v.clone(), val);
    }
    Ok(mem)
}

fn cells(v: &Value) -> usize {
    match v {
        Value::List(l) => 1 + l.iter().map(cells).sum::<usize>(),
        _ => 1,
    }
}

/// Runs `p` on one input. Parameters bind positionally to the input's
/// values; every other variable starts undefined.
pub fn run(p: &Program, input: &Input, step_limit: usize) -> RunOutcome {
    if input.args.len() != p.params.len() {
        return RunOutcome::Error {
            step: 0,
            var: None,
            message: format!("program takes {} parameters but the input has {}", p.params.len(), input.args.len()),
        };
    }
    let mut orders: BTreeMap<LocId, Vec<Ident>> = BTreeMap::new();
    let mut pre: BTreeMap<Ident, Value> = p.vars.iter().map(|v| (v.clone(), Value::Undef)).collect();
    for (param, (_, value)) in p.params.iter().zip(&input.args) {
        pre.insert(param.clone(), value.clone());
    }
    let mut steps = Vec::new();
    let mut loc = p.init;
    let mut stored = 0usize;
    loop {
        if steps.len() >= step_limit {
            return RunOutcome::StepLimit;
        }
        let step = steps.len();
        let order = match orders.get(&loc) {
            Some(o) => o,
            None => match evaluation_order(p, loc) {
                Ok(o) => orders.entry(loc).or_insert(o),
                Err(e) => return RunOutcome::Error { step, var: None, message: e.message },
            },
        };
        let mem = match step_location(p, loc, order, pre) {
            Ok(m) => m,
            Err((var, e)) => return RunOutcome::Error { step, var: Some(var), message: e.message },
        };
        stored += mem.post.values().map(cells).sum::<usize>() * 2;
        if stored > MAX_TRACE_CELLS {
            return RunOutcome::StepLimit;
        }
        let l = p.loc(loc);
        let next = if l.succ_true == l.succ_false {
            l.succ_true
        } else {
            match truthy(mem.get_post(COND)) {
                Ok(b) => l.succ(b),
                Err(e) => return RunOutcome::Error { step, var: None, message: format!("branch decision: {}", e.message) },
            }
        };
        pre = mem.post.clone();
        steps.push(Step { loc, mem });
        match next {
            Target::End => return RunOutcome::Ok(Trace { steps }),
            Target::Loc(n) => loc = n,
        }
    }
}

pub fn run_all(p: &Program, ins: &InputSet, step_limit: usize) -> Vec<RunOutcome> {
    ins.inputs().iter().map(|i| run(p, i, step_limit)).collect()
}

/// Direct interpreter over the function AST, used as an oracle for the
/// lowering.
pub mod reference {
    use std::collections::BTreeMap;

    use super::{apply, eval, truthy, EvalError};
    use crate::frontend::{Function, Stmt, StmtKind};
    use crate::model::{Expr, Memory, Op, Value};

    struct Walker {
        env: BTreeMap<String, Value>,
        budget: usize,
    }

    enum Flow {
        Next,
        Return(Value),
    }

    impl Walker {
        fn eval(&self, e: &Expr) -> Result<Value, EvalError> {
            let m = Memory { pre: self.env.clone(), post: BTreeMap::new() };
            eval(e, &m)
        }

        fn tick(&mut self) -> Result<(), EvalError> {
            if self.budget == 0 {
                return Err(EvalError { message: "step limit".into() });
            }
            self.budget -= 1;
            Ok(())
        }

        fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, EvalError> {
            for s in stmts {
                if let Flow::Return(v) = self.stmt(s)? {
                    return Ok(Flow::Return(v));
                }
            }
            Ok(Flow::Next)
        }

        fn stmt(&mut self, s: &Stmt) -> Result<Flow, EvalError> {
            match &s.kind {
                StmtKind::Pass => Ok(Flow::Next),
                StmtKind::Assign(v, e) => {
                    let val = self.eval(e)?;
                    self.env.insert(v.clone(), val);
                    Ok(Flow::Next)
                }
                StmtKind::Return(e) => Ok(Flow::Return(self.eval(e)?)),
                StmtKind::If(c, t, f) => {
                    if truthy(&self.eval(c)?)? {
                        self.block(t)
                    } else {
                        self.block(f)
                    }
                }
                StmtKind::While(c, body) => loop {
                    self.tick()?;
                    if !truthy(&self.eval(c)?)? {
                        return Ok(Flow::Next);
                    }
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                },
                StmtKind::For(v, a, b, body) => {
                    let start = self.eval(a)?;
                    let end = self.eval(b)?;
                    let Value::List(range) = apply(Op::Range, vec![start, end])? else { unreachable!() };
                    for i in range {
                        self.tick()?;
                        self.env.insert(v.clone(), i);
                        if let Flow::Return(v) = self.block(body)? {
                            return Ok(Flow::Return(v));
                        }
                    }
                    Ok(Flow::Next)
                }
            }
        }
    }

    /// Calls `f` on positional arguments; a function that falls off its
    /// end returns `None` (undefined).
    pub fn call(f: &Function, args: &[Value], budget: usize) -> Result<Value, EvalError> {
        if args.len() != f.params.len() {
            return Err(EvalError { message: "argument count mismatch".into() });
        }
        let mut w = Walker { env: f.params.iter().cloned().zip(args.iter().cloned()).collect(), budget };
        match w.block(&f.body)? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Ok(Value::Undef),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{compile, parse_expr, SourceUnit};

    fn mem(pairs: &[(&str, Value)]) -> Memory {
        Memory { pre: pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(), post: BTreeMap::new() }
    }

    fn floats(xs: &[f64]) -> Value {
        Value::List(xs.iter().map(|x| Value::Float(*x)).collect())
    }

    fn ev(src: &str, m: &Memory) -> Result<Value, EvalError> {
        eval(&parse_expr(src).unwrap(), m)
    }

    #[test]
    fn arithmetic_and_comparisons() {
        let m = mem(&[("num", Value::Int(0))]);
        assert_eq!(ev("num + 1", &m), Ok(Value::Int(1)));
        let m = mem(&[("num", Value::Int(2)), ("poly", floats(&[6.3, 7.6, 12.14]))]);
        assert_eq!(ev("num < len(poly) - 1", &m), Ok(Value::Bool(false)));
        assert_eq!(ev("7 % -3", &m), Ok(Value::Int(-2)));
        assert_eq!(ev("-7 % 3", &m), Ok(Value::Int(2)));
        assert_eq!(ev("7 / 2", &m), Ok(Value::Float(3.5)));
        assert_eq!(ev("2 ** 10", &m), Ok(Value::Int(1024)));
        assert_eq!(ev("poly[-1]", &m), Ok(Value::Float(12.14)));
        assert_eq!(ev("poly[1:]", &m), Ok(floats(&[7.6, 12.14])));
        assert_eq!(ev("0 or 5", &m), Ok(Value::Int(5)));
    }

    #[test]
    fn evaluation_errors() {
        let m = mem(&[("a", Value::List(vec![Value::Int(1)]))]);
        assert!(ev("a[5]", &m).unwrap_err().message.contains("out of range"));
        assert!(ev("1 / 0", &m).is_err());
        assert!(ev("9223372036854775807 + 1", &m).is_err());
        assert!(ev("x + 1", &m).is_err());
    }

    #[test]
    fn ite_is_lazy() {
        let m = mem(&[("p", Value::List(vec![]))]);
        assert_eq!(ev("(len(p) > 0) ? p[0] : 0", &m), Ok(Value::Int(0)));
    }

    const C1: &str = "def computeDeriv(poly):
    der = []
    num = 0
    while num < len(poly) - 1:
        der = append(der, float(poly[num+1]*(num+1)))
        num = num + 1
    if len(poly) == 1:
        der = append(der, 0.0)
    return der
";

    fn input(v: Value) -> Input {
        Input::new("t", vec![("poly".into(), v)])
    }

    #[test]
    fn c1_trace_matches_the_worked_example() {
        let p = compile(&SourceUnit::new("c1", C1)).unwrap();
        let out = run(&p, &input(floats(&[6.3, 7.6, 12.14])), DEFAULT_STEP_LIMIT);
        let t = out.trace().unwrap();
        assert_eq!(t.locations().iter().map(|l| l.0).collect::<Vec<_>>(), vec![1, 2, 3, 2, 3, 2, 4]);
        assert_eq!(t.return_value(), floats(&[7.6, 24.28]));
        for w in t.steps.windows(2) {
            assert_eq!(w[1].mem.pre, w[0].mem.post);
        }
        let out = run(&p, &input(floats(&[5.0])), DEFAULT_STEP_LIMIT);
        assert_eq!(out.return_value(), Some(floats(&[0.0])));
    }

    #[test]
    fn infinite_loop_hits_the_step_limit() {
        let p = compile(&SourceUnit::new("inf", "def f(x):\n    while True:\n        pass\n    return x\n")).unwrap();
        let out = run(&p, &Input::new("t", vec![("x".into(), Value::Int(1))]), DEFAULT_STEP_LIMIT);
        assert_eq!(out, RunOutcome::StepLimit);
    }

    #[test]
    fn primed_reads_follow_dependencies_not_map_order() {
        let p = compile(&SourceUnit::new("s", "def f(a):\n    z = a + 1\n    b = z * 2\n    return b\n")).unwrap();
        let out = run(&p, &Input::new("t", vec![("a".into(), Value::Int(3))]), 10);
        assert_eq!(out.return_value(), Some(Value::Int(8)));
    }

    #[test]
    fn input_sets_reject_empty() {
        assert!(InputSet::new(vec![]).is_err());
    }

    #[test]
    fn reference_walker_agrees_on_c1() {
        let src = SourceUnit::new("c1", C1);
        let f = crate::frontend::parse(&src).unwrap();
        let v = reference::call(&f, &[floats(&[1.0, 2.0, 3.0])], 1000).unwrap();
        assert_eq!(v, floats(&[2.0, 6.0]));
    }
}
