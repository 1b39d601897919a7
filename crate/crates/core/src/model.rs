//! Program model shared by every other module: values, expressions,
//! memories, programs (locations with per-variable expression labels and a
//! boolean-indexed successor function) and traces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Variable identifier. Special variables carry a `$` prefix.
pub type Ident = String;

/// Branch-decision variable assigned by loop conditions.
pub const COND: &str = "$cond";
/// Return-value variable assigned by `return`.
pub const RET: &str = "$ret";

pub fn is_special(name: &str) -> bool {
    name == COND || name == RET
}

const FLOAT_REL_TOL: f64 = 1e-9;
const FLOAT_ABS_TOL: f64 = 1e-12;

/// A value of the computation domain. `Undef` is the undefined value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
    Undef,
}

fn float_eq(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    if a.is_nan() || b.is_nan() {
        return false;
    }
    let diff = (a - b).abs();
    diff <= FLOAT_ABS_TOL || diff <= FLOAT_REL_TOL * a.abs().max(b.abs())
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        use Value::*;
        match (self, other) {
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => float_eq(*a, *b),
            (Int(a), Float(b)) | (Float(b), Int(a)) => float_eq(*a as f64, *b),
            (Bool(a), Bool(b)) => a == b,
            (Str(a), Str(b)) => a == b,
            (List(a), List(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y),
            (Undef, Undef) => true,
            _ => false,
        }
    }
}

impl Value {
    pub fn is_undef(&self) -> bool {
        matches!(self, Value::Undef)
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Bool(_) => "bool",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Undef => "undefined",
        }
    }

    /// Exact (bitwise for floats) rendering, used to deduplicate memories.
    pub(crate) fn exact_key(&self, out: &mut String) {
        use std::fmt::Write;
        match self {
            Value::Int(i) => {
                let _ = write!(out, "i{i}");
            }
            Value::Float(f) => {
                let _ = write!(out, "f{:x}", f.to_bits());
            }
            Value::Bool(b) => {
                let _ = write!(out, "b{}", *b as u8);
            }
            Value::Str(s) => {
                let _ = write!(out, "s{}:{s}", s.len());
            }
            Value::List(items) => {
                let _ = write!(out, "l{}[", items.len());
                for item in items {
                    item.exact_key(out);
                    out.push(',');
                }
                out.push(']');
            }
            Value::Undef => out.push('u'),
        }
    }
}

fn write_float(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    if x.is_finite() {
        write!(f, "{x:?}")
    } else if x.is_nan() {
        write!(f, "float(\"nan\")")
    } else if x > 0.0 {
        write!(f, "float(\"inf\")")
    } else {
        write!(f, "float(\"-inf\")")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write_float(f, *x),
            Value::Bool(true) => write!(f, "True"),
            Value::Bool(false) => write!(f, "False"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::List(items) => {
                write!(f, "[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
            Value::Undef => write!(f, "None"),
        }
    }
}

/// Number of arguments an operation accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arity {
    Exact(usize),
    Between(usize, usize),
    AtLeast(usize),
}

impl Arity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Arity::Exact(k) => n == k,
            Arity::Between(lo, hi) => (lo..=hi).contains(&n),
            Arity::AtLeast(lo) => n >= lo,
        }
    }
}

/// Operations of the expression language: operators, the conditional,
/// list construction and the built-in functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    Neg,
    Not,
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Index,
    Slice,
    MakeList,
    Ite,
    Len,
    Append,
    Insert,
    Concat,
    Float,
    Int,
    Abs,
    Min,
    Max,
    Range,
    List,
    IndexOf,
}

impl Op {
    /// Name used as the tree-edit node label.
    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Mod => "%",
            Op::Pow => "**",
            Op::Neg => "neg",
            Op::Not => "not",
            Op::And => "and",
            Op::Or => "or",
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Index => "[]",
            Op::Slice => "[:]",
            Op::MakeList => "[..]",
            Op::Ite => "ite",
            Op::Len => "len",
            Op::Append => "append",
            Op::Insert => "insert",
            Op::Concat => "concat",
            Op::Float => "float",
            Op::Int => "int",
            Op::Abs => "abs",
            Op::Min => "min",
            Op::Max => "max",
            Op::Range => "range",
            Op::List => "list",
            Op::IndexOf => "index",
        }
    }

    pub fn arity(self) -> Arity {
        match self {
            Op::Neg | Op::Not => Arity::Exact(1),
            Op::Add
            | Op::Sub
            | Op::Mul
            | Op::Div
            | Op::Mod
            | Op::Pow
            | Op::And
            | Op::Or
            | Op::Eq
            | Op::Ne
            | Op::Lt
            | Op::Le
            | Op::Gt
            | Op::Ge
            | Op::Index => Arity::Exact(2),
            Op::Slice | Op::Ite => Arity::Exact(3),
            Op::MakeList => Arity::AtLeast(0),
            Op::Len | Op::Float | Op::Int | Op::Abs => Arity::Exact(1),
            Op::Append | Op::Concat | Op::IndexOf => Arity::Exact(2),
            Op::Insert => Arity::Exact(3),
            Op::Min | Op::Max => Arity::AtLeast(1),
            Op::Range => Arity::Between(1, 2),
            Op::List => Arity::Between(0, 1),
        }
    }

    /// Built-in callable by name in source programs.
    pub fn builtin(name: &str) -> Option<Op> {
        Some(match name {
            "len" => Op::Len,
            "append" => Op::Append,
            "insert" => Op::Insert,
            "concat" => Op::Concat,
            "float" => Op::Float,
            "int" => Op::Int,
            "abs" => Op::Abs,
            "min" => Op::Min,
            "max" => Op::Max,
            "range" => Op::Range,
            "list" => Op::List,
            "index" => Op::IndexOf,
            "ite" => Op::Ite,
            _ => return None,
        })
    }

    pub fn is_builtin_call(self) -> bool {
        matches!(
            self,
            Op::Len
                | Op::Append
                | Op::Insert
                | Op::Concat
                | Op::Float
                | Op::Int
                | Op::Abs
                | Op::Min
                | Op::Max
                | Op::Range
                | Op::List
                | Op::IndexOf
        )
    }
}

/// Expression tree. `Primed(v)` reads the value `v` holds after the
/// current location has assigned it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Var(Ident),
    Primed(Ident),
    Const(Value),
    Op(Op, Vec<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<Ident>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn primed(name: impl Into<Ident>) -> Expr {
        Expr::Primed(name.into())
    }

    pub fn int(i: i64) -> Expr {
        Expr::Const(Value::Int(i))
    }

    pub fn float(x: f64) -> Expr {
        Expr::Const(Value::Float(x))
    }

    pub fn op(op: Op, args: Vec<Expr>) -> Expr {
        Expr::Op(op, args)
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Op(_, args) => 1 + args.iter().map(Expr::node_count).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn children(&self) -> &[Expr] {
        match self {
            Expr::Op(_, args) => args,
            _ => &[],
        }
    }

    /// Node label used by the tree edit distance.
    pub fn node_label(&self) -> String {
        match self {
            Expr::Var(v) => format!("var:{v}"),
            Expr::Primed(v) => format!("var:{v}'"),
            Expr::Const(c) => format!("const:{c}"),
            Expr::Op(op, _) => op.name().to_string(),
        }
    }

    /// Unprimed variables occurring in the expression.
    pub fn unprimed_vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    /// Variables occurring primed in the expression.
    pub fn primed_vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Primed(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    /// All variables used, primed or not, reported unprimed.
    pub fn vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| match e {
            Expr::Var(v) | Expr::Primed(v) => {
                out.insert(v.clone());
            }
            _ => {}
        });
        out
    }

    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        if let Expr::Op(_, args) = self {
            for a in args {
                a.walk(f);
            }
        }
    }

    /// Renames variables (primed and unprimed alike) through `map`; names
    /// absent from the map are kept.
    pub fn rename(&self, map: &BTreeMap<Ident, Ident>) -> Expr {
        match self {
            Expr::Var(v) => Expr::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
            Expr::Primed(v) => Expr::Primed(map.get(v).cloned().unwrap_or_else(|| v.clone())),
            Expr::Const(c) => Expr::Const(c.clone()),
            Expr::Op(op, args) => Expr::Op(*op, args.iter().map(|a| a.rename(map)).collect()),
        }
    }

    /// True when the two expressions differ only in which variable
    /// occurrences are primed.
    pub fn eq_modulo_primes(&self, other: &Expr) -> bool {
        match (self, other) {
            (Expr::Var(a) | Expr::Primed(a), Expr::Var(b) | Expr::Primed(b)) => a == b,
            (Expr::Const(a), Expr::Const(b)) => a == b,
            (Expr::Op(o1, a1), Expr::Op(o2, a2)) => {
                o1 == o2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| x.eq_modulo_primes(y))
            }
            _ => false,
        }
    }
}

/// Location identifier; assigned in source order starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocId(pub u32);

impl fmt::Display for LocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// Successor of a location: another location or the end of the program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Loc(LocId),
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocKind {
    /// Straight-line region (loop-free statements folded together).
    Block,
    /// Loop condition; assigns `$cond`.
    LoopCond,
}

/// One location of a program.
#[derive(Clone, Debug, PartialEq)]
pub struct Location {
    pub kind: LocKind,
    /// Nesting depth of enclosing loops (0 at top level).
    pub loop_depth: u32,
    /// Explicit labels; unlisted variables keep their value.
    pub labels: BTreeMap<Ident, Expr>,
    /// Source line of the statement that produced each explicit label.
    pub lines: BTreeMap<Ident, u32>,
    /// Source order in which the labels' final assignments appear.
    pub order: Vec<Ident>,
    /// Inclusive source line range of the statements folded here.
    pub span: Option<(u32, u32)>,
    /// Line used to anchor feedback when nothing is assigned here.
    pub anchor_line: u32,
    pub succ_true: Target,
    pub succ_false: Target,
}

impl Location {
    pub fn new(kind: LocKind, loop_depth: u32, anchor_line: u32) -> Location {
        Location {
            kind,
            loop_depth,
            labels: BTreeMap::new(),
            lines: BTreeMap::new(),
            order: Vec::new(),
            span: None,
            anchor_line,
            succ_true: Target::End,
            succ_false: Target::End,
        }
    }

    pub fn succ(&self, branch: bool) -> Target {
        if branch {
            self.succ_true
        } else {
            self.succ_false
        }
    }
}

/// A program in the model: locations, initial location, variables and
/// the two label/successor maps. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub name: String,
    /// Input variables, in declaration order.
    pub params: Vec<Ident>,
    pub init: LocId,
    /// All variables in a stable order: parameters, then source order of
    /// first appearance, then the special variables.
    pub vars: Vec<Ident>,
    pub special_vars: BTreeSet<Ident>,
    pub locations: BTreeMap<LocId, Location>,
}

impl Program {
    pub fn loc(&self, id: LocId) -> &Location {
        &self.locations[&id]
    }

    pub fn loc_ids(&self) -> impl Iterator<Item = LocId> + '_ {
        self.locations.keys().copied()
    }

    pub fn has_var(&self, v: &str) -> bool {
        self.vars.iter().any(|x| x == v)
    }

    /// Label of `v` at `loc`: the explicit expression, or `v` itself when
    /// the location leaves `v` unassigned.
    pub fn label(&self, loc: LocId, v: &str) -> Expr {
        self.locations
            .get(&loc)
            .and_then(|l| l.labels.get(v))
            .cloned()
            .unwrap_or_else(|| Expr::Var(v.to_string()))
    }

    pub fn is_default_label(&self, loc: LocId, v: &str) -> bool {
        match self.locations.get(&loc).and_then(|l| l.labels.get(v)) {
            None => true,
            Some(Expr::Var(x)) => x == v,
            Some(_) => false,
        }
    }

    pub fn succ(&self, loc: LocId, branch: bool) -> Target {
        self.loc(loc).succ(branch)
    }

    /// Non-special, non-parameter variables.
    pub fn ordinary_vars(&self) -> impl Iterator<Item = &Ident> + '_ {
        self.vars
            .iter()
            .filter(move |v| !self.special_vars.contains(*v) && !self.params.contains(*v))
    }

    pub fn param_index(&self, v: &str) -> Option<usize> {
        self.params.iter().position(|p| p == v)
    }
}

/// One problem found by [`validate_program`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn validate_program(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |m: String| out.push(Diagnostic { message: m });
    if !p.locations.contains_key(&p.init) {
        diag(format!("initial location {} is not a location", p.init));
    }
    for special in [COND, RET] {
        if !p.special_vars.contains(special) {
            diag(format!("special variable {special} is not declared special"));
        }
        if !p.has_var(special) {
            diag(format!("special variable {special} is missing from vars"));
        }
    }
    for s in &p.special_vars {
        if !p.has_var(s) {
            diag(format!("special variable {s} is not in vars"));
        }
    }
    let declared: BTreeSet<&str> = p.vars.iter().map(String::as_str).collect();
    if declared.len() != p.vars.len() {
        diag("variable list contains duplicates".to_string());
    }
    for param in &p.params {
        if !declared.contains(param.as_str()) {
            diag(format!("parameter {param} is not in vars"));
        }
    }
    for (id, loc) in &p.locations {
        for target in [loc.succ_true, loc.succ_false] {
            if let Target::Loc(t) = target {
                if !p.locations.contains_key(&t) {
                    diag(format!("successor {t} of {id} is not a location"));
                }
            }
        }
        for (v, e) in &loc.labels {
            if !declared.contains(v.as_str()) {
                diag(format!("label at {id} assigns undeclared variable {v}"));
            }
            for used in e.vars() {
                if !declared.contains(used.as_str()) {
                    diag(format!("label of {v} at {id} reads undeclared variable {used}"));
                }
            }
            let mut bad_arity = None;
            e.walk(&mut |n| {
                if let Expr::Op(op, args) = n {
                    if !op.arity().accepts(args.len()) && bad_arity.is_none() {
                        bad_arity = Some((*op, args.len()));
                    }
                }
            });
            if let Some((op, n)) = bad_arity {
                diag(format!("label of {v} at {id} applies {} to {n} arguments", op.name()));
            }
        }
    }
    out
}

/// Memory over unprimed (pre) and primed (post) variables. Unbound names
/// read as `Undef`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Memory {
    pub pre: BTreeMap<Ident, Value>,
    pub post: BTreeMap<Ident, Value>,
}

static UNDEF: Value = Value::Undef;

impl Memory {
    pub fn get(&self, v: &str) -> &Value {
        self.pre.get(v).unwrap_or(&UNDEF)
    }

    pub fn get_post(&self, v: &str) -> &Value {
        self.post.get(v).unwrap_or(&UNDEF)
    }

    pub fn exact_key(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pre {
            out.push_str(k);
            out.push('=');
            v.exact_key(&mut out);
            out.push(';');
        }
        out.push('|');
        for (k, v) in &self.post {
            out.push_str(k);
            out.push('=');
            v.exact_key(&mut out);
            out.push(';');
        }
        out
    }
}

/// One execution step: the location and its pre/post memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub loc: LocId,
    pub mem: Memory,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub steps: Vec<Step>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn locations(&self) -> Vec<LocId> {
        self.steps.iter().map(|s| s.loc).collect()
    }

    /// Final value of `$ret`.
    pub fn return_value(&self) -> Value {
        self.steps
            .last()
            .map(|s| s.mem.get_post(RET).clone())
            .unwrap_or(Value::Undef)
    }
}
