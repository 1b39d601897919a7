//! Student-facing feedback from a repair: explicit wording for small
//! edits, templates with holes for larger ones, at most three items.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::frontend::format_expr;
use crate::model::{Expr, Ident, LocKind, Op, Program, COND, RET};
use crate::problem::ProblemConfig;
use crate::repair::{Modification, RepairResult};

pub const MAX_ITEMS: usize = 3;
/// Modifications up to this cost are described explicitly.
pub const EXPLICIT_MAX_COST: usize = 2;
pub const HOLE: &str = "\u{25a1}";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Explicit,
    Template,
    Delete,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub line: u32,
    pub kind: ItemKind,
    pub message: String,
    pub cost: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub items: Vec<FeedbackItem>,
    pub fallback: Option<String>,
}

impl Feedback {
    pub fn fallback(text: &str) -> Feedback {
        Feedback { items: Vec::new(), fallback: Some(text.to_string()) }
    }

    /// Plain-text block, one item per line.
    pub fn to_text(&self) -> String {
        match &self.fallback {
            Some(f) => f.clone(),
            None => self.items.iter().map(|i| i.message.as_str()).collect::<Vec<_>>().join("\n"),
        }
    }
}

/// Highest cost first, then earliest line.
pub fn rank_modifications(mods: &[Modification]) -> Vec<&Modification> {
    let mut out: Vec<&Modification> = mods.iter().collect();
    out.sort_by(|a, b| b.cost.cmp(&a.cost).then(a.line.cmp(&b.line)).then(a.impl_var.cmp(&b.impl_var)));
    out
}

/// Feedback for `result` on implementation `imp`.
pub fn render(result: Option<&RepairResult>, imp: &Program, config: &ProblemConfig) -> Feedback {
    let Some(r) = result else { return Feedback::fallback(&config.fallback_text) };
    if r.total_cost > config.cost_fallback_threshold {
        return Feedback::fallback(&config.fallback_text);
    }
    let items: Vec<FeedbackItem> = rank_modifications(&r.mods)
        .into_iter()
        .filter(|m| !implied(m, r))
        .take(MAX_ITEMS)
        .map(|m| item(m, r, imp))
        .collect();
    if items.is_empty() {
        return Feedback::fallback(&config.fallback_text);
    }
    Feedback { items, fallback: None }
}

/// A change of primes only, where every variable whose read moved across
/// the assignment is itself modified at the same location: the ordering
/// follows from the other items.
fn implied(m: &Modification, r: &RepairResult) -> bool {
    let Some(new) = &m.new_expr else { return false };
    if !m.old_expr.eq_modulo_primes(new) {
        return false;
    }
    let moved: BTreeSet<Ident> = m.old_expr.primed_vars().symmetric_difference(&new.primed_vars()).cloned().collect();
    moved.iter().all(|v| r.mods.iter().any(|o| o.impl_loc == m.impl_loc && o.impl_var == *v && !o.is_deletion()))
}

/// Surface form: primes dropped, fresh variables shown as holes.
fn display(e: &Expr, fresh: &BTreeSet<Ident>) -> Expr {
    match e {
        Expr::Var(v) | Expr::Primed(v) if fresh.contains(v) => Expr::Var(HOLE.into()),
        Expr::Var(v) | Expr::Primed(v) => Expr::Var(v.clone()),
        Expr::Const(c) => Expr::Const(c.clone()),
        Expr::Op(op, args) => Expr::Op(*op, args.iter().map(|a| display(a, fresh)).collect()),
    }
}

fn show(e: &Expr, fresh: &BTreeSet<Ident>) -> String {
    format_expr(&display(e, fresh))
}

fn var_name(v: &str, fresh: &BTreeSet<Ident>) -> String {
    if fresh.contains(v) {
        "a new variable".into()
    } else {
        v.to_string()
    }
}

fn context(m: &Modification, imp: &Program, fresh: &BTreeSet<Ident>) -> String {
    let in_cond = imp.locations.get(&m.impl_loc).is_some_and(|l| l.kind == LocKind::LoopCond);
    match m.impl_var.as_str() {
        COND if in_cond => "the loop condition".into(),
        COND => "the branch condition".into(),
        RET => "the return statement".into(),
        v => format!("the assignment to {}", var_name(v, fresh)),
    }
}

fn has_return(imp: &Program, m: &Modification) -> bool {
    imp.locations.get(&m.impl_loc).is_some_and(|l| l.labels.contains_key(RET))
}

fn item(m: &Modification, r: &RepairResult, imp: &Program) -> FeedbackItem {
    let fresh = &r.fresh;
    let line = m.line;
    let (kind, message) = match &m.new_expr {
        None => (ItemKind::Delete, format!("Remove the assignment to {} at line {line}.", m.impl_var)),
        Some(new) if imp.is_default_label(m.impl_loc, &m.impl_var) || !imp.has_var(&m.impl_var) => insertion(m, new, imp, fresh),
        Some(new) if m.old_expr.eq_modulo_primes(new) => (ItemKind::Explicit, reorder_message(m, new, fresh)),
        Some(new) if m.cost <= EXPLICIT_MAX_COST => {
            let diffs = differences(&display(&m.old_expr, fresh), &display(new, fresh));
            let changes: Vec<String> = diffs.iter().map(|(a, b)| format!("{a} to {b}")).collect();
            (ItemKind::Explicit, format!("Change {} in {} at line {line}.", changes.join(" and "), context(m, imp, fresh)))
        }
        Some(new) => {
            let t = template(&display(new, fresh), &display(&m.old_expr, fresh));
            (ItemKind::Template, format!("Change {} at line {line} to something like {}.", context(m, imp, fresh), format_expr(&t)))
        }
    };
    FeedbackItem { line, kind, message, cost: m.cost }
}

fn insertion(m: &Modification, new: &Expr, imp: &Program, fresh: &BTreeSet<Ident>) -> (ItemKind, String) {
    let line = m.line;
    let v = &m.impl_var;
    let place = if has_return(imp, m) { format!("before return at line {line}") } else { format!("at line {line}") };
    let appended = |e: &Expr| match e {
        Expr::Op(Op::Append, a) if a.len() == 2 && is_var(&a[0], v) => Some(a[1].clone()),
        _ => None,
    };
    if let Some(x) = appended(new) {
        return (ItemKind::Explicit, format!("Append {} to {}, {place}.", show(&x, fresh), var_name(v, fresh)));
    }
    if let Expr::Op(Op::Ite, a) = new {
        if let (Some(x), true) = (appended(&a[1]), is_var(&a[2], v)) {
            return (
                ItemKind::Explicit,
                format!("Append {} to {}, if {}, {place}.", show(&x, fresh), var_name(v, fresh), show(&a[0], fresh)),
            );
        }
    }
    let target = var_name(v, fresh);
    if m.cost <= EXPLICIT_MAX_COST {
        (ItemKind::Explicit, format!("Assign {} to {target} {place}.", show(new, fresh)))
    } else {
        let t = template(&display(new, fresh), &Expr::Var(v.clone()));
        (ItemKind::Template, format!("Assign something like {} to {target} {place}.", format_expr(&t)))
    }
}

fn is_var(e: &Expr, v: &str) -> bool {
    matches!(e, Expr::Var(x) | Expr::Primed(x) if x == v)
}

fn reorder_message(m: &Modification, new: &Expr, fresh: &BTreeSet<Ident>) -> String {
    let (old_p, new_p) = (m.old_expr.primed_vars(), new.primed_vars());
    let after: Vec<String> = new_p.difference(&old_p).map(|v| var_name(v, fresh)).collect();
    let before: Vec<String> = old_p.difference(&new_p).map(|v| var_name(v, fresh)).collect();
    let what = match m.impl_var.as_str() {
        RET => "Return".to_string(),
        v => format!("Assign {}", var_name(v, fresh)),
    };
    let mut parts = Vec::new();
    if !after.is_empty() {
        parts.push(format!("after the assignment to {}", after.join(" and ")));
    }
    if !before.is_empty() {
        parts.push(format!("before the assignment to {}", before.join(" and ")));
    }
    format!("{what} {} at line {}.", parts.join(" and "), m.line)
}

fn token(e: &Expr) -> String {
    match e {
        Expr::Var(v) | Expr::Primed(v) => v.clone(),
        Expr::Const(c) => c.to_string(),
        Expr::Op(Op::Neg, _) => "-".into(),
        Expr::Op(op, _) => op.name().to_string(),
    }
}

/// Pairs of (old, new) text for the places where two expressions differ.
fn differences(old: &Expr, new: &Expr) -> Vec<(String, String)> {
    let mut out = Vec::new();
    diff_rec(old, new, &mut out);
    out
}

fn diff_rec(old: &Expr, new: &Expr, out: &mut Vec<(String, String)>) {
    if old == new {
        return;
    }
    match (old, new) {
        (Expr::Op(o1, a1), Expr::Op(o2, a2)) if a1.len() == a2.len() => {
            if o1 != o2 {
                out.push((token(old), token(new)));
            }
            for (x, y) in a1.iter().zip(a2) {
                diff_rec(x, y, out);
            }
        }
        (Expr::Op(..), _) | (_, Expr::Op(..)) => out.push((format_expr(old), format_expr(new))),
        _ => out.push((token(old), token(new))),
    }
}

fn subtrees(e: &Expr, out: &mut Vec<Expr>) {
    out.push(e.clone());
    for c in e.children() {
        subtrees(c, out);
    }
}

fn op_labels(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    e.walk(&mut |n| {
        if let Expr::Op(op, _) = n {
            out.insert(op.name().to_string());
        }
    });
    out
}

/// `new` with holes for variables and subexpressions that do not occur in
/// `old`, keeping operators the student already used.
fn template(new: &Expr, old: &Expr) -> Expr {
    let mut known = Vec::new();
    subtrees(old, &mut known);
    let ops = op_labels(old);
    fn go(e: &Expr, known: &[Expr], ops: &BTreeSet<String>) -> Expr {
        if known.contains(e) {
            return e.clone();
        }
        match e {
            Expr::Op(op, args) if ops.contains(op.name()) => Expr::Op(*op, args.iter().map(|a| go(a, known, ops)).collect()),
            Expr::Op(op, args) if args.iter().any(|a| known.contains(a)) => {
                Expr::Op(*op, args.iter().map(|a| go(a, known, ops)).collect())
            }
            _ => Expr::Var(HOLE.into()),
        }
    }
    let t = go(new, &known, &ops);
    if t == Expr::Var(HOLE.into()) {
        if let Expr::Op(op, args) = new {
            return Expr::Op(*op, args.iter().map(|_| Expr::Var(HOLE.into())).collect());
        }
    }
    t
}
