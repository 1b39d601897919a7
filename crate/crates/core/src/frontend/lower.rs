//! Lowering of a function AST to the location-based program model.
//!
//! Each maximal loop-free region becomes one block location, each loop one
//! condition location followed by the locations of its body. Loop-free
//! conditionals fold into `ite` labels. Within a location, a read of a
//! variable assigned earlier in the same location becomes a primed read
//! when it sees the variable's final value there, and is inlined when it
//! sees an intermediate value.

use std::collections::{BTreeMap, BTreeSet};

use super::{Function, FrontendError, Stmt, StmtKind};
use crate::model::{Expr, Ident, LocId, LocKind, Location, Op, Program, Target, Value, COND, RET};

/// Expression over symbolic versions: `Ref(v, None)` is the value `v` has
/// on entry to the location, `Ref(v, Some(k))` the value from event `k`.
#[derive(Clone, Debug)]
enum Sym {
    Ref(Ident, Option<usize>),
    Const(Value),
    Op(Op, Vec<Sym>),
}

#[derive(Debug)]
struct Event {
    var: Ident,
    expr: Sym,
    line: u32,
}

#[derive(Default)]
struct Region {
    events: Vec<Event>,
    current: BTreeMap<Ident, usize>,
    first_line: Option<u32>,
    last_line: Option<u32>,
}

impl Region {
    fn touch(&mut self, line: u32) {
        self.first_line = Some(self.first_line.map_or(line, |l| l.min(line)));
        self.last_line = Some(self.last_line.map_or(line, |l| l.max(line)));
    }

    fn sym(&self, e: &Expr) -> Sym {
        match e {
            Expr::Var(v) | Expr::Primed(v) => Sym::Ref(v.clone(), self.current.get(v).copied()),
            Expr::Const(c) => Sym::Const(c.clone()),
            Expr::Op(op, args) => Sym::Op(*op, args.iter().map(|a| self.sym(a)).collect()),
        }
    }

    fn assign(&mut self, var: &str, expr: Sym, line: u32) {
        self.events.push(Event { var: var.to_string(), expr, line });
        self.current.insert(var.to_string(), self.events.len() - 1);
        self.touch(line);
    }

    fn render(&self, s: &Sym) -> Expr {
        match s {
            Sym::Ref(v, None) => Expr::Var(v.clone()),
            Sym::Ref(v, Some(k)) => {
                if self.current.get(v) == Some(k) {
                    Expr::Primed(v.clone())
                } else {
                    self.render(&self.events[*k].expr)
                }
            }
            Sym::Const(c) => Expr::Const(c.clone()),
            Sym::Op(op, args) => Expr::Op(*op, args.iter().map(|a| self.render(a)).collect()),
        }
    }
}

struct Lowerer {
    locations: BTreeMap<LocId, Location>,
    next_id: u32,
    vars: Vec<Ident>,
    seen: BTreeSet<Ident>,
    iter_count: u32,
    last_line: u32,
}

fn lowering_error<T>(line: u32, message: impl Into<String>) -> Result<T, FrontendError> {
    Err(FrontendError::Lowering { line, message: message.into() })
}

impl Lowerer {
    fn alloc(&mut self) -> LocId {
        self.next_id += 1;
        LocId(self.next_id)
    }

    fn declare(&mut self, v: &str) {
        if self.seen.insert(v.to_string()) {
            self.vars.push(v.to_string());
        }
    }

    fn declare_expr(&mut self, e: &Expr) {
        e.walk(&mut |n| {
            if let Expr::Var(v) = n {
                if self.seen.insert(v.clone()) {
                    self.vars.push(v.clone());
                }
            }
        });
    }

    /// Lowers a statement list into a chain of locations. Returns the entry
    /// and the final block location, whose successors the caller sets.
    fn lower_block(&mut self, stmts: &[Stmt], depth: u32, tail: bool) -> Result<(LocId, LocId), FrontendError> {
        let entry = self.alloc();
        let mut region_id = entry;
        let mut region = Region::default();
        for (i, stmt) in stmts.iter().enumerate() {
            let is_last = i + 1 == stmts.len();
            self.last_line = self.last_line.max(stmt.line);
            match &stmt.kind {
                StmtKind::While(..) | StmtKind::For(..) => {
                    let (cond_expr, body, prologue, epilogue) = match &stmt.kind {
                        StmtKind::While(c, body) => {
                            self.declare_expr(c);
                            (c.clone(), body, None, None)
                        }
                        StmtKind::For(v, start, end, body) => {
                            self.iter_count += 1;
                            let counter = format!("$iter{}", self.iter_count);
                            self.declare_expr(start);
                            self.declare(&counter);
                            self.declare_expr(end);
                            self.declare(v);
                            let init = region.sym(start);
                            region.assign(&counter, init, stmt.line);
                            let cond = Expr::op(Op::Lt, vec![Expr::var(&counter), end.clone()]);
                            let first = Stmt { kind: StmtKind::Assign(v.clone(), Expr::var(&counter)), line: stmt.line };
                            let step = Stmt {
                                kind: StmtKind::Assign(
                                    counter.clone(),
                                    Expr::op(Op::Add, vec![Expr::var(&counter), Expr::int(1)]),
                                ),
                                line: stmt.line,
                            };
                            (cond, body, Some(first), Some(step))
                        }
                        _ => unreachable!(),
                    };
                    self.finish_region(region_id, region, depth, stmt.line);
                    region = Region::default();

                    let cond_id = self.alloc();
                    let mut cond_loc = Location::new(LocKind::LoopCond, depth, stmt.line);
                    cond_loc.labels.insert(COND.to_string(), cond_expr);
                    cond_loc.lines.insert(COND.to_string(), stmt.line);
                    cond_loc.order.push(COND.to_string());
                    cond_loc.span = Some((stmt.line, stmt.line));
                    self.locations.insert(cond_id, cond_loc);

                    let mut full_body: Vec<Stmt> = Vec::with_capacity(body.len() + 2);
                    full_body.extend(prologue);
                    full_body.extend(body.iter().cloned());
                    full_body.extend(epilogue);
                    let (body_entry, body_exit) = self.lower_block(&full_body, depth + 1, false)?;

                    let next = self.alloc();
                    self.set_succ(region_id, Target::Loc(cond_id), Target::Loc(cond_id));
                    self.set_succ(cond_id, Target::Loc(body_entry), Target::Loc(next));
                    self.set_succ(body_exit, Target::Loc(cond_id), Target::Loc(cond_id));
                    region_id = next;
                }
                _ => self.lower_simple(&mut region, stmt, tail && is_last, is_last)?,
            }
        }
        let anchor = region.first_line.unwrap_or(self.last_line);
        self.finish_region(region_id, region, depth, anchor);
        Ok((entry, region_id))
    }

    fn lower_simple(&mut self, region: &mut Region, stmt: &Stmt, tail: bool, is_last: bool) -> Result<(), FrontendError> {
        match &stmt.kind {
            StmtKind::Pass => {
                region.touch(stmt.line);
            }
            StmtKind::Assign(v, e) => {
                self.declare_expr(e);
                self.declare(v);
                let s = region.sym(e);
                region.assign(v, s, stmt.line);
            }
            StmtKind::Return(e) => {
                if !is_last {
                    return lowering_error(stmt.line, "statements after `return` are not supported");
                }
                if !tail {
                    return lowering_error(
                        stmt.line,
                        "`return` is only supported as the final statement of the function (not inside loops or before other statements)",
                    );
                }
                self.declare_expr(e);
                let s = region.sym(e);
                region.assign(RET, s, stmt.line);
            }
            StmtKind::If(c, then, els) => {
                self.declare_expr(c);
                let guard = region.sym(c);
                region.touch(stmt.line);
                let before = region.current.clone();
                let start = region.events.len();
                self.lower_branch(region, then, tail)?;
                let after_then = std::mem::replace(&mut region.current, before.clone());
                self.lower_branch(region, els, tail)?;
                let after_else = std::mem::replace(&mut region.current, before.clone());

                // Merge each variable assigned in either branch, in order of
                // its first assignment.
                let mut merged: Vec<Ident> = Vec::new();
                let mut lines: BTreeMap<Ident, u32> = BTreeMap::new();
                for ev in &region.events[start..] {
                    if !merged.contains(&ev.var) {
                        merged.push(ev.var.clone());
                    }
                    let l = lines.entry(ev.var.clone()).or_insert(ev.line);
                    *l = (*l).max(ev.line);
                }
                for v in merged {
                    let t = Sym::Ref(v.clone(), after_then.get(&v).copied());
                    let f = Sym::Ref(v.clone(), after_else.get(&v).copied());
                    let merge = Sym::Op(Op::Ite, vec![guard.clone(), t, f]);
                    region.assign(&v, merge, lines[&v]);
                }
            }
            StmtKind::While(..) | StmtKind::For(..) => unreachable!(),
        }
        Ok(())
    }

    fn lower_branch(&mut self, region: &mut Region, stmts: &[Stmt], tail: bool) -> Result<(), FrontendError> {
        for (i, s) in stmts.iter().enumerate() {
            self.last_line = self.last_line.max(s.line);
            if matches!(s.kind, StmtKind::While(..) | StmtKind::For(..)) {
                return Err(FrontendError::Unsupported { line: s.line, construct: "loop inside an if statement".into() });
            }
            let is_last = i + 1 == stmts.len();
            self.lower_simple(region, s, tail && is_last, is_last)?;
        }
        Ok(())
    }

    fn finish_region(&mut self, id: LocId, region: Region, depth: u32, anchor: u32) {
        let mut loc = Location::new(LocKind::Block, depth, region.first_line.unwrap_or(anchor));
        let mut finals: Vec<(usize, Ident)> = region.current.iter().map(|(v, k)| (*k, v.clone())).collect();
        finals.sort();
        for (k, v) in finals {
            let label = region.render(&region.events[k].expr);
            loc.labels.insert(v.clone(), label);
            loc.lines.insert(v.clone(), region.events[k].line);
            loc.order.push(v);
        }
        loc.span = region.first_line.zip(region.last_line);
        self.locations.insert(id, loc);
    }

    fn set_succ(&mut self, id: LocId, t: Target, f: Target) {
        let loc = self.locations.get_mut(&id).expect("location allocated");
        loc.succ_true = t;
        loc.succ_false = f;
    }
}

/// Lowers a parsed function to a program.
pub fn lower(f: &Function) -> Result<Program, FrontendError> {
    let mut seen = BTreeSet::new();
    for p in &f.params {
        if !seen.insert(p.clone()) {
            return lowering_error(f.line, format!("duplicate parameter `{p}`"));
        }
    }
    let mut l = Lowerer {
        locations: BTreeMap::new(),
        next_id: 0,
        vars: f.params.clone(),
        seen,
        iter_count: 0,
        last_line: f.line,
    };
    let (entry, exit) = l.lower_block(&f.body, 0, true)?;
    l.set_succ(exit, Target::End, Target::End);
    let mut vars = l.vars;
    vars.push(COND.to_string());
    vars.push(RET.to_string());
    Ok(Program {
        name: f.name.clone(),
        params: f.params.clone(),
        init: entry,
        vars,
        special_vars: [COND, RET].iter().map(|s| s.to_string()).collect(),
        locations: l.locations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{compile, format_expr, parse_expr, SourceUnit};
    use super::*;
    use crate::model::validate_program;

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

    fn prog(src: &str) -> Program {
        compile(&SourceUnit::new("t", src)).unwrap()
    }

    fn label(p: &Program, l: u32, v: &str) -> String {
        format_expr(&p.label(LocId(l), v))
    }

    #[test]
    fn c1_lowers_to_four_locations() {
        let p = prog(C1);
        assert!(validate_program(&p).is_empty());
        assert_eq!(p.locations.len(), 4);
        assert_eq!(p.init, LocId(1));
        assert_eq!(p.label(LocId(1), "num"), Expr::int(0));
        assert_eq!(label(&p, 2, COND), "num < len(poly) - 1");
        assert_eq!(label(&p, 4, RET), "der\u{2032}");
        assert_eq!(label(&p, 4, "der"), "(len(poly)==1) ? append(der, 0.0) : der");
        assert_eq!(p.label(LocId(2), "poly"), Expr::var("poly"));
        assert_eq!(p.succ(LocId(1), true), Target::Loc(LocId(2)));
        assert_eq!(p.succ(LocId(2), true), Target::Loc(LocId(3)));
        assert_eq!(p.succ(LocId(2), false), Target::Loc(LocId(4)));
        assert_eq!(p.succ(LocId(3), false), Target::Loc(LocId(2)));
        assert_eq!(p.succ(LocId(4), true), Target::End);
        assert_eq!(p.vars, vec!["poly", "der", "num", COND, RET]);
        assert_eq!(p.loc(LocId(2)).lines[COND], 4);
    }

    #[test]
    fn sequence_reads_become_primed() {
        let p = prog("def f():\n    x = 1\n    y = x\n");
        assert_eq!(p.locations.len(), 1);
        assert_eq!(p.label(LocId(1), "y"), Expr::primed("x"));
    }

    #[test]
    fn intermediate_values_are_inlined() {
        let p = prog("def f(a):\n    x = a + 1\n    y = x\n    x = 2\n    return y\n");
        assert_eq!(p.label(LocId(1), "y"), parse_expr("a + 1").unwrap());
        assert_eq!(p.label(LocId(1), "x"), Expr::int(2));
        assert_eq!(p.label(LocId(1), RET), Expr::primed("y"));
    }

    #[test]
    fn fibonacci_body_uses_primes() {
        let src = "def fib(n, m):
    cnt = 0
    f = 1
    i = 1
    n1 = 0
    while f <= m:
        f = f + i
        if f >= n and f <= m:
            cnt = cnt + 1
        i = i + n1
        n1 = i
    return cnt
";
        let p = prog(src);
        assert_eq!(label(&p, 3, "f"), "f + i");
        assert_eq!(label(&p, 3, "cnt"), "(f\u{2032} >= n and f\u{2032} <= m) ? cnt + 1 : cnt");
        assert_eq!(label(&p, 3, "i"), "i + n1");
        assert_eq!(label(&p, 3, "n1"), "i\u{2032}");
        assert_eq!(p.loc(LocId(3)).order, vec!["f", "cnt", "i", "n1"]);
    }

    #[test]
    fn for_loops_use_an_explicit_counter() {
        let p = prog("def f(xs):\n    s = 0\n    for i in range(len(xs)):\n        s = s + xs[i]\n    return s\n");
        assert_eq!(p.locations.len(), 4);
        assert_eq!(p.label(LocId(1), "$iter1"), Expr::int(0));
        assert_eq!(label(&p, 2, COND), "$iter1 < len(xs)");
        assert_eq!(label(&p, 3, "i"), "$iter1");
        assert_eq!(label(&p, 3, "s"), "s + xs[i\u{2032}]");
        assert_eq!(label(&p, 3, "$iter1"), "$iter1 + 1");
    }

    #[test]
    fn return_inside_loop_is_rejected() {
        let e = compile(&SourceUnit::new("t", "def f(n):\n    while n > 0:\n        return n\n    return 0\n")).unwrap_err();
        assert!(matches!(e, FrontendError::Lowering { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn returns_in_tail_conditionals_merge() {
        let p = prog("def f(x):\n    if x > 0:\n        return 1\n    else:\n        return 2\n");
        assert_eq!(label(&p, 1, RET), "(x > 0) ? 1 : 2");
    }

    #[test]
    fn early_return_is_rejected() {
        let e = compile(&SourceUnit::new("t", "def f(x):\n    if x:\n        return 1\n    y = 2\n    return y\n")).unwrap_err();
        assert!(matches!(e, FrontendError::Lowering { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn nested_loops_chain_locations() {
        let p = prog("def f(n):\n    t = 0\n    i = 0\n    while i < n:\n        j = 0\n        while j < i:\n            t = t + j\n            j = j + 1\n        i = i + 1\n    return t\n");
        assert!(validate_program(&p).is_empty());
        // region, cond, body-head, inner cond, inner body, body-tail, exit
        assert_eq!(p.locations.len(), 7);
        assert_eq!(p.loc(LocId(6)).succ_true, Target::Loc(LocId(2)));
        assert_eq!(p.loc(LocId(4)).succ_false, Target::Loc(LocId(6)));
    }
}
