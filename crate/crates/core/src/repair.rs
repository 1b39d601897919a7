//! Repair of an attempt against a specification: conditional matchings,
//! the 0-1 ILP encoding and its decoding, statement-order conflicts, and
//! application of the resulting modifications.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::format_expr;
use crate::ilp::{solve, Assignment, IlpModel, Relation, Sense, SolveOutcome, VarId};
use crate::interp::{eval, run_all, InputSet, RunOutcome, DEFAULT_STEP_LIMIT};
use crate::matching::{spec_traces, structure_match, Kappa};
use crate::model::{Expr, Ident, LocId, LocKind, Memory, Program, Trace, COND, RET};
use crate::treedist::{delete_cost, insert_cost, tree_distance};

pub const DEFAULT_BUDGET: Duration = Duration::from_secs(60);
/// Expressions with more distinct variables only get mappings built from
/// pairs already seen in cost-0 matchings at the same location.
pub const MAX_MAPPING_VARS: usize = 6;
/// Share of the budget for candidate collection and the first solve, in
/// percent.
const FIRST_PHASE_PERCENT: u32 = 80;

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepairError {
    #[error("no specification has the same control-flow structure")]
    NoStructure,
    #[error("specification {spec} fails on the inputs")]
    SpecFailed { spec: String },
    #[error("repair timed out")]
    Timeout,
    #[error("no consistent repair exists")]
    Unsolvable,
}

/// Implementation-side end of a variable pair: an existing variable or a
/// fresh one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Var(Ident),
    Star,
}

/// One candidate: spec variable `spec_var` at `spec_loc` is matched
/// (at cost 0) or made to match (at `cost`) by `target` under `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMatching {
    pub spec_loc: LocId,
    /// `None` marks a deletion of `target`.
    pub spec_var: Option<Ident>,
    pub target: Side,
    /// Spec variable to implementation side, for every variable the
    /// candidate relies on.
    pub rho: BTreeMap<Ident, Side>,
    pub cost: usize,
    /// New label for the target, in implementation names.
    pub replacement: Option<Expr>,
    /// Unmatched implementation helpers whose labels a cost-0 matching
    /// reads through primes; they must stay unmatched and undeleted.
    #[serde(default)]
    pub aux: BTreeSet<Ident>,
}

impl ConditionalMatching {
    pub fn is_deletion(&self) -> bool {
        self.spec_var.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    pub impl_loc: LocId,
    pub impl_var: Ident,
    pub old_expr: Expr,
    /// `None` deletes the assignment.
    pub new_expr: Option<Expr>,
    pub cost: usize,
    /// Source line the modification is reported at.
    pub line: u32,
    pub spec_loc: LocId,
    pub spec_var: Option<Ident>,
    pub old_text: String,
    pub new_text: Option<String>,
}

impl Modification {
    pub fn is_deletion(&self) -> bool {
        self.new_expr.is_none()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub inserts_variable: bool,
    pub inserts_statement: bool,
    pub reorders: bool,
}

impl Complexity {
    pub fn is_complicated(&self) -> bool {
        self.inserts_variable || self.inserts_statement || self.reorders
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairResult {
    pub spec_id: String,
    /// Total mapping from spec variables to implementation variables or
    /// fresh names.
    pub pi: BTreeMap<Ident, Ident>,
    pub fresh: BTreeSet<Ident>,
    pub mods: Vec<Modification>,
    pub total_cost: usize,
    pub kappa: Vec<(LocId, LocId)>,
    /// Order conflicts found by the first solve.
    pub initial_conflicts: usize,
    /// Re-solves caused by order conflicts.
    pub conflict_rounds: usize,
    /// Set when a conflict could not be resolved by re-solving.
    pub unresolved_conflicts: bool,
    pub complexity: Complexity,
}

#[derive(Clone, Debug)]
pub struct RepairOptions {
    pub budget: Duration,
    pub step_limit: usize,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions { budget: DEFAULT_BUDGET, step_limit: DEFAULT_STEP_LIMIT }
    }
}

/// Allowed implementation sides for spec variable `u1`: special variables
/// map to themselves, parameters by position, anything else to an
/// ordinary implementation variable or a fresh one.
pub fn targets(spec: &Program, imp: &Program, u1: &str) -> Vec<Side> {
    if spec.special_vars.contains(u1) {
        return if imp.has_var(u1) { vec![Side::Var(u1.to_string())] } else { Vec::new() };
    }
    if let Some(i) = spec.param_index(u1) {
        return imp.params.get(i).map(|p| vec![Side::Var(p.clone())]).unwrap_or_default();
    }
    imp.ordinary_vars().map(|v| Side::Var(v.clone())).chain([Side::Star]).collect()
}

fn allowed(spec: &Program, imp: &Program, u1: &str, u2: &str) -> bool {
    if spec.special_vars.contains(u1) {
        return u1 == u2;
    }
    if let Some(i) = spec.param_index(u1) {
        return imp.params.get(i).is_some_and(|p| p == u2);
    }
    !imp.special_vars.contains(u2) && !imp.params.iter().any(|p| p == u2) && imp.has_var(u2)
}

/// Fresh implementation names for spec variables mapped to a new
/// variable.
pub fn fresh_names(spec: &Program, imp: &Program) -> BTreeMap<Ident, Ident> {
    let mut taken: BTreeSet<Ident> = imp.vars.iter().cloned().collect();
    let mut out = BTreeMap::new();
    for v in &spec.vars {
        let mut name = format!("{v}_new");
        let mut k = 2;
        while taken.contains(&name) {
            name = format!("{v}_new{k}");
            k += 1;
        }
        taken.insert(name.clone());
        out.insert(v.clone(), name);
    }
    out
}

/// Variable order demanded by assigning `e` to `v`: `v` before every
/// variable it reads unprimed, after every variable it reads primed.
pub fn order(v: &str, e: &Expr) -> BTreeSet<(Ident, Ident)> {
    let mut out = BTreeSet::new();
    for x in e.unprimed_vars() {
        if x != v {
            out.insert((v.to_string(), x));
        }
    }
    for x in e.primed_vars() {
        if x != v {
            out.insert((x, v.to_string()));
        }
    }
    out
}

fn conflicting(a: &BTreeSet<(Ident, Ident)>, b: &BTreeSet<(Ident, Ident)>) -> bool {
    a.iter().any(|(x, y)| b.contains(&(y.clone(), x.clone())))
}

struct Timeout;

struct Ctx<'a> {
    spec: &'a Program,
    imp: &'a Program,
    kappa: &'a Kappa,
    memories: BTreeMap<LocId, Vec<Memory>>,
    fresh: BTreeMap<Ident, Ident>,
    deadline: Option<Instant>,
    ticks: usize,
}

impl<'a> Ctx<'a> {
    fn new(spec: &'a Program, imp: &'a Program, kappa: &'a Kappa, traces: &[Trace], deadline: Option<Instant>) -> Ctx<'a> {
        let mut memories: BTreeMap<LocId, Vec<Memory>> = spec.loc_ids().map(|l| (l, Vec::new())).collect();
        let mut seen: HashSet<(LocId, String)> = HashSet::new();
        for t in traces {
            for s in &t.steps {
                if seen.insert((s.loc, s.mem.exact_key())) {
                    memories.entry(s.loc).or_default().push(s.mem.clone());
                }
            }
        }
        Ctx { spec, imp, kappa, memories, fresh: fresh_names(spec, imp), deadline, ticks: 0 }
    }

    fn tick(&mut self) -> Result<(), Timeout> {
        self.ticks += 1;
        if self.ticks % 256 == 0 && self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Timeout);
        }
        Ok(())
    }

    fn side_name(&self, u1: &str, s: &Side) -> Ident {
        match s {
            Side::Var(v) => v.clone(),
            Side::Star => self.fresh[u1].clone(),
        }
    }

    /// Cost-0 matchings: implementation labels that compute the reference
    /// post-value on every spec memory at `l1`.
    fn correct(&mut self, l1: LocId, v1: &str) -> Result<Vec<ConditionalMatching>, Timeout> {
        let mut out = Vec::new();
        if self.memories[&l1].is_empty() {
            return Ok(out);
        }
        let l2 = self.kappa[&l1];
        for t in targets(self.spec, self.imp, v1) {
            let Side::Var(v2) = &t else { continue };
            let e2 = self.imp.label(l2, v2);
            let found = out.len();
            self.correct_for(l1, v1, v2, &e2, &BTreeSet::new(), &mut out)?;
            if out.len() == found {
                let mut aux = BTreeSet::new();
                let inlined = inline_helpers(self.imp, l2, v2, &e2, &mut aux, 0);
                if !aux.is_empty() {
                    self.correct_for(l1, v1, v2, &inlined, &aux, &mut out)?;
                }
            }
        }
        Ok(out)
    }

    fn correct_for(
        &mut self,
        l1: LocId,
        v1: &str,
        v2: &str,
        e2: &Expr,
        aux: &BTreeSet<Ident>,
        out: &mut Vec<ConditionalMatching>,
    ) -> Result<(), Timeout> {
        let others: Vec<Ident> = e2.vars().into_iter().filter(|u| u != v2).collect();
        if others.iter().any(|u| aux.contains(u)) || aux.contains(v2) {
            return Ok(());
        }
        let options: Vec<Vec<Ident>> = others
            .iter()
            .map(|u2| self.spec.vars.iter().filter(|u1| *u1 != v1 && allowed(self.spec, self.imp, u1, u2)).cloned().collect())
            .collect();
        let mut chosen: Vec<Ident> = Vec::new();
        self.correct_rec(l1, v1, v2, e2, &others, &options, aux, &mut chosen, out)
    }

    #[allow(clippy::too_many_arguments)]
    fn correct_rec(
        &mut self,
        l1: LocId,
        v1: &str,
        v2: &str,
        e2: &Expr,
        others: &[Ident],
        options: &[Vec<Ident>],
        aux: &BTreeSet<Ident>,
        chosen: &mut Vec<Ident>,
        out: &mut Vec<ConditionalMatching>,
    ) -> Result<(), Timeout> {
        self.tick()?;
        let k = chosen.len();
        if k == others.len() {
            let mut inv: BTreeMap<&str, &str> = BTreeMap::from([(v2, v1)]);
            for (u2, u1) in others.iter().zip(chosen.iter()) {
                inv.insert(u2, u1);
            }
            if self.memories[&l1].iter().all(|m| holds(e2, v1, &inv, m)) {
                let mut rho = BTreeMap::from([(v1.to_string(), Side::Var(v2.to_string()))]);
                for (u2, u1) in others.iter().zip(chosen.iter()) {
                    rho.insert(u1.clone(), Side::Var(u2.clone()));
                }
                out.push(ConditionalMatching {
                    spec_loc: l1,
                    spec_var: Some(v1.to_string()),
                    target: Side::Var(v2.to_string()),
                    rho,
                    cost: 0,
                    replacement: None,
                    aux: aux.clone(),
                });
            }
            return Ok(());
        }
        for u1 in &options[k] {
            if chosen.contains(u1) {
                continue;
            }
            chosen.push(u1.clone());
            self.correct_rec(l1, v1, v2, e2, others, options, aux, chosen, out)?;
            chosen.pop();
        }
        Ok(())
    }

    /// Candidates translating the reference label of `v1` through every
    /// injective mapping of its variables.
    fn modifications(
        &mut self,
        l1: LocId,
        v1: &str,
        zero_pairs: &BTreeSet<(Ident, Side)>,
    ) -> Result<Vec<ConditionalMatching>, Timeout> {
        let e1 = self.spec.label(l1, v1);
        let l2 = self.kappa[&l1];
        let us: Vec<Ident> = e1.vars().into_iter().filter(|u| u != v1).collect();
        let capped = us.len() + 1 > MAX_MAPPING_VARS;
        let mut out = Vec::new();
        for t in targets(self.spec, self.imp, v1) {
            let options: Vec<Vec<Side>> = us
                .iter()
                .map(|u1| {
                    targets(self.spec, self.imp, u1)
                        .into_iter()
                        .filter(|s| {
                            *s == Side::Star
                                || !capped
                                || self.spec.special_vars.contains(u1)
                                || self.spec.param_index(u1).is_some()
                                || zero_pairs.contains(&(u1.clone(), s.clone()))
                        })
                        .collect()
                })
                .collect();
            let mut chosen = Vec::new();
            self.mod_rec(l1, l2, v1, &t, &e1, &us, &options, &mut chosen, &mut out)?;
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn mod_rec(
        &mut self,
        l1: LocId,
        l2: LocId,
        v1: &str,
        t: &Side,
        e1: &Expr,
        us: &[Ident],
        options: &[Vec<Side>],
        chosen: &mut Vec<Side>,
        out: &mut Vec<ConditionalMatching>,
    ) -> Result<(), Timeout> {
        self.tick()?;
        let k = chosen.len();
        if k == us.len() {
            let mut rename = BTreeMap::from([(v1.to_string(), self.side_name(v1, t))]);
            let mut rho = BTreeMap::from([(v1.to_string(), t.clone())]);
            for (u1, s) in us.iter().zip(chosen.iter()) {
                rename.insert(u1.clone(), self.side_name(u1, s));
                rho.insert(u1.clone(), s.clone());
            }
            let er = e1.rename(&rename);
            let name = self.side_name(v1, t);
            let cost = match t {
                Side::Star if er == Expr::Var(name.clone()) => 0,
                Side::Star => insert_cost(&er),
                Side::Var(v2) => tree_distance(&self.imp.label(l2, v2), &er),
            };
            out.push(ConditionalMatching {
                spec_loc: l1,
                spec_var: Some(v1.to_string()),
                target: t.clone(),
                rho,
                cost,
                replacement: (cost > 0).then_some(er),
                aux: BTreeSet::new(),
            });
            return Ok(());
        }
        for s in &options[k] {
            let clash = match s {
                Side::Star => false,
                Side::Var(_) => s == t || chosen.contains(s),
            };
            if clash {
                continue;
            }
            chosen.push(s.clone());
            self.mod_rec(l1, l2, v1, t, e1, us, options, chosen, out)?;
            chosen.pop();
        }
        Ok(())
    }

    /// All candidates for (`l1`, `v1`), correct ones first; duplicates
    /// with the same mapping keep the cheapest.
    fn group(&mut self, l1: LocId, v1: &str, zero_pairs: &BTreeSet<(Ident, Side)>, correct: Vec<ConditionalMatching>) -> Result<Vec<ConditionalMatching>, Timeout> {
        let mut out: Vec<ConditionalMatching> = Vec::new();
        let mut index: BTreeMap<BTreeMap<Ident, Side>, usize> = BTreeMap::new();
        for c in correct.into_iter().chain(self.modifications(l1, v1, zero_pairs)?) {
            match index.get(&c.rho) {
                Some(&i) if out[i].cost <= c.cost => {}
                Some(&i) => out[i] = c,
                None => {
                    index.insert(c.rho.clone(), out.len());
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Replaces primed reads of ordinary implementation variables assigned at
/// `l2` by their labels, recording the inlined names in `aux`.
fn inline_helpers(imp: &Program, l2: LocId, v2: &str, e: &Expr, aux: &mut BTreeSet<Ident>, depth: usize) -> Expr {
    match e {
        Expr::Primed(u)
            if depth < 16
                && u != v2
                && !imp.is_default_label(l2, u)
                && !imp.special_vars.contains(u)
                && imp.param_index(u).is_none() =>
        {
            aux.insert(u.clone());
            inline_helpers(imp, l2, v2, &imp.label(l2, u), aux, depth + 1)
        }
        Expr::Op(op, args) => Expr::Op(*op, args.iter().map(|a| inline_helpers(imp, l2, v2, a, aux, depth)).collect()),
        other => other.clone(),
    }
}

/// Whether `e2` (implementation names) evaluates to the reference post-value of
/// `v1` on `m` translated through `inv` (implementation to spec names).
fn holds(e2: &Expr, v1: &str, inv: &BTreeMap<&str, &str>, m: &Memory) -> bool {
    let want = m.get_post(v1);
    if want.is_undef() {
        return true;
    }
    let mut t = Memory::default();
    for (u2, u1) in inv {
        t.pre.insert(u2.to_string(), m.get(u1).clone());
        t.post.insert(u2.to_string(), m.get_post(u1).clone());
    }
    matches!(eval(e2, &t), Ok(v) if v == *want)
}

/// Conditional matchings for (`l1`, `v1`): cost-0 matchings of existing
/// labels and translated spec labels as modifications.
pub fn cond_matchings(spec: &Program, imp: &Program, kappa: &Kappa, traces: &[Trace], l1: LocId, v1: &str) -> Vec<ConditionalMatching> {
    let mut ctx = Ctx::new(spec, imp, kappa, traces, None);
    let correct = ctx.correct(l1, v1).unwrap_or_default();
    let zero = zero_pairs(&correct);
    ctx.group(l1, v1, &zero, correct).unwrap_or_default()
}

fn zero_pairs(cs: &[ConditionalMatching]) -> BTreeSet<(Ident, Side)> {
    cs.iter().flat_map(|c| c.rho.iter().map(|(a, b)| (a.clone(), b.clone()))).collect()
}

/// Deletion candidates at implementation location `l2`, attributed to
/// spec location `l1`.
pub fn delete_matchings(imp: &Program, l1: LocId, l2: LocId) -> Vec<ConditionalMatching> {
    imp.ordinary_vars()
        .filter(|v| !imp.is_default_label(l2, v))
        .map(|v| ConditionalMatching {
            spec_loc: l1,
            spec_var: None,
            target: Side::Var(v.clone()),
            rho: BTreeMap::new(),
            cost: delete_cost(&imp.label(l2, v)),
            replacement: None,
            aux: BTreeSet::new(),
        })
        .collect()
}

/// The ILP over pair variables and candidate selectors.
pub struct Encoding {
    pub model: IlpModel,
    pub candidates: Vec<ConditionalMatching>,
    pub selectors: Vec<VarId>,
    pub pairs: BTreeMap<(Ident, Side), VarId>,
    pub deleted: BTreeMap<Ident, VarId>,
}

fn pair_name(v1: &str, s: &Side) -> String {
    match s {
        Side::Var(v2) => format!("x:{v1}:{v2}"),
        Side::Star => format!("b:new:{v1}"),
    }
}

/// Builds the 0-1 model minimizing the cost of the selected candidates:
/// each spec variable maps to exactly one side, each implementation
/// variable is used once or deleted, a candidate implies the pairs it
/// relies on, and exactly one candidate is chosen per spec variable and
/// location.
pub fn encode(candidates: Vec<ConditionalMatching>, spec: &Program, imp: &Program) -> Encoding {
    let mut model = IlpModel::new(Sense::Min);
    let mut pairs = BTreeMap::new();
    let mut deleted = BTreeMap::new();
    let mut by_impl: BTreeMap<Ident, Vec<VarId>> = imp.vars.iter().map(|v| (v.clone(), Vec::new())).collect();
    for v1 in &spec.vars {
        let mut row = Vec::new();
        for s in targets(spec, imp, v1) {
            let id = model.add_var(pair_name(v1, &s)).expect("unique pair name");
            if let Side::Var(v2) = &s {
                by_impl.get_mut(v2).expect("impl variable").push(id);
            }
            pairs.insert((v1.clone(), s), id);
            row.push((id, 1));
        }
        model.add_constraint(&row, Relation::Eq, 1).expect("declared");
    }
    for v2 in imp.ordinary_vars() {
        let id = model.add_var(format!("a:del:{v2}")).expect("unique deletion name");
        by_impl.get_mut(v2).expect("impl variable").push(id);
        deleted.insert(v2.clone(), id);
    }
    for ids in by_impl.values() {
        let row: Vec<(VarId, i64)> = ids.iter().map(|id| (*id, 1)).collect();
        model.add_constraint(&row, Relation::Eq, 1).expect("declared");
    }
    let width = candidates.len().max(1).to_string().len();
    let mut selectors = Vec::with_capacity(candidates.len());
    let mut groups: BTreeMap<(LocId, Ident), Vec<VarId>> = BTreeMap::new();
    let mut aux_uses = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let id = model.add_var(format!("m:{i:0width$}")).expect("unique selector");
        model.set_objective(id, c.cost as i64);
        selectors.push(id);
        match &c.spec_var {
            Some(v1) => {
                groups.entry((c.spec_loc, v1.clone())).or_default().push(id);
                for (u1, s) in &c.rho {
                    let p = pairs[&(u1.clone(), s.clone())];
                    model.add_constraint(&[(id, -1), (p, 1)], Relation::Ge, 0).expect("declared");
                }
                for u2 in &c.aux {
                    model.add_constraint(&[(id, -1), (deleted[u2], 1)], Relation::Ge, 0).expect("declared");
                    aux_uses.push((i, c.spec_loc, u2.clone()));
                }
            }
            None => {
                let Side::Var(v2) = &c.target else { unreachable!("deletions name a variable") };
                model.add_constraint(&[(id, -1), (deleted[v2], 1)], Relation::Ge, 0).expect("declared");
            }
        }
    }
    for ids in groups.values() {
        let row: Vec<(VarId, i64)> = ids.iter().map(|id| (*id, 1)).collect();
        model.add_constraint(&row, Relation::Eq, 1).expect("declared");
    }
    for (i, l1, u2) in aux_uses {
        for (j, d) in candidates.iter().enumerate() {
            if d.is_deletion() && d.spec_loc == l1 && d.target == Side::Var(u2.clone()) {
                model.add_constraint(&[(selectors[i], 1), (selectors[j], 1)], Relation::Le, 1).expect("declared");
            }
        }
    }
    Encoding { model, candidates, selectors, pairs, deleted }
}

/// A solved encoding: the chosen side per spec variable and the selected
/// candidate indices.
pub struct Decoded {
    pub pi: BTreeMap<Ident, Side>,
    pub selected: Vec<usize>,
}

pub fn decode(enc: &Encoding, a: &Assignment) -> Decoded {
    let mut pi = BTreeMap::new();
    for ((v1, s), id) in &enc.pairs {
        if a.value(*id) {
            pi.insert(v1.clone(), s.clone());
        }
    }
    let selected = enc.selectors.iter().enumerate().filter(|(_, id)| a.value(**id)).map(|(i, _)| i).collect();
    Decoded { pi, selected }
}

/// Expression the implementation variable gets under candidate `c`.
fn candidate_expr(c: &ConditionalMatching, imp: &Program, kappa: &Kappa, fresh: &BTreeMap<Ident, Ident>) -> (Ident, Expr) {
    let v1 = c.spec_var.as_deref().unwrap_or_default();
    let name = match &c.target {
        Side::Var(v2) => v2.clone(),
        Side::Star => fresh[v1].clone(),
    };
    let e = match (&c.replacement, &c.target) {
        (Some(e), _) => e.clone(),
        (None, Side::Var(v2)) => imp.label(kappa[&c.spec_loc], v2),
        (None, Side::Star) => Expr::Var(name.clone()),
    };
    (name, e)
}

/// Sets of selected candidates whose variable orders cannot be realized
/// together: conflicting pairs, or, when there are none, longer cycles.
/// Only sets involving at least one modification are reported.
pub fn check_order_conflicts(
    candidates: &[ConditionalMatching],
    selected: &[usize],
    imp: &Program,
    kappa: &Kappa,
    fresh: &BTreeMap<Ident, Ident>,
) -> Vec<Vec<usize>> {
    let mut by_loc: BTreeMap<LocId, Vec<(usize, BTreeSet<(Ident, Ident)>)>> = BTreeMap::new();
    for &i in selected {
        let c = &candidates[i];
        if c.is_deletion() {
            continue;
        }
        let (name, e) = candidate_expr(c, imp, kappa, fresh);
        by_loc.entry(c.spec_loc).or_default().push((i, order(&name, &e)));
    }
    let mut out = Vec::new();
    for group in by_loc.values() {
        for (a, (i, oi)) in group.iter().enumerate() {
            for (j, oj) in &group[a + 1..] {
                if (candidates[*i].cost > 0 || candidates[*j].cost > 0) && conflicting(oi, oj) {
                    out.push(vec![*i, *j]);
                }
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for group in by_loc.values() {
        let mut edges: BTreeMap<&Ident, Vec<(&Ident, usize)>> = BTreeMap::new();
        for (i, o) in group {
            for (x, y) in o {
                edges.entry(x).or_default().push((y, *i));
            }
        }
        for (i, o) in group {
            if candidates[*i].cost == 0 {
                continue;
            }
            for (x, y) in o {
                if let Some(mut path) = find_path(&edges, y, x) {
                    path.push(*i);
                    path.sort_unstable();
                    path.dedup();
                    if path.len() >= 2 && seen.insert(path.clone()) {
                        out.push(path);
                    }
                }
            }
        }
    }
    out
}

/// Candidates along a shortest edge path from `from` to `to`.
fn find_path(edges: &BTreeMap<&Ident, Vec<(&Ident, usize)>>, from: &Ident, to: &Ident) -> Option<Vec<usize>> {
    let mut prev: BTreeMap<&Ident, (&Ident, usize)> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut visited = BTreeSet::from([from]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            let mut path = Vec::new();
            let mut cur = n;
            while let Some((p, c)) = prev.get(cur) {
                path.push(*c);
                cur = p;
            }
            return Some(path);
        }
        for (m, c) in edges.get(n).into_iter().flatten() {
            if visited.insert(*m) {
                prev.insert(*m, (n, *c));
                queue.push_back(*m);
            }
        }
    }
    None
}

/// Line a modification of `v2` at `l2` is reported at.
fn report_line(imp: &Program, l2: LocId, v2: &str) -> u32 {
    let l = imp.loc(l2);
    let cond = (l.kind == LocKind::LoopCond).then(|| l.lines.get(COND)).flatten();
    l.lines.get(v2).or(cond).or_else(|| l.lines.get(RET)).copied().unwrap_or(l.anchor_line)
}

fn build_result(
    spec: &Program,
    imp: &Program,
    kappa: &Kappa,
    enc: &Encoding,
    d: &Decoded,
    fresh_map: &BTreeMap<Ident, Ident>,
) -> RepairResult {
    let mut pi = BTreeMap::new();
    let mut fresh = BTreeSet::new();
    for (v1, s) in &d.pi {
        let name = match s {
            Side::Var(v2) => v2.clone(),
            Side::Star => {
                fresh.insert(fresh_map[v1].clone());
                fresh_map[v1].clone()
            }
        };
        pi.insert(v1.clone(), name);
    }
    let mut mods = Vec::new();
    for &i in &d.selected {
        let c = &enc.candidates[i];
        if c.cost == 0 {
            continue;
        }
        let l2 = kappa[&c.spec_loc];
        let (name, new_expr) = match (&c.spec_var, &c.target) {
            (None, Side::Var(v2)) => (v2.clone(), None),
            _ => {
                let (name, e) = candidate_expr(c, imp, kappa, fresh_map);
                (name, Some(e))
            }
        };
        let old_expr = imp.label(l2, &name);
        mods.push(Modification {
            impl_loc: l2,
            impl_var: name.clone(),
            old_text: format_expr(&old_expr),
            new_text: new_expr.as_ref().map(format_expr),
            old_expr,
            new_expr,
            cost: c.cost,
            line: if imp.has_var(&name) { report_line(imp, l2, &name) } else { report_line(imp, l2, "") },
            spec_loc: c.spec_loc,
            spec_var: c.spec_var.clone(),
        });
    }
    mods.sort_by(|a, b| (a.impl_loc, &a.impl_var).cmp(&(b.impl_loc, &b.impl_var)));
    let total_cost = mods.iter().map(|m| m.cost).sum();
    let mut r = RepairResult {
        spec_id: spec.name.clone(),
        pi,
        fresh,
        mods,
        total_cost,
        kappa: kappa.iter().map(|(a, b)| (*a, *b)).collect(),
        initial_conflicts: 0,
        conflict_rounds: 0,
        unresolved_conflicts: false,
        complexity: Complexity::default(),
    };
    r.complexity = complexity(imp, &r);
    r
}

/// Q[π, R]: the implementation with fresh variables added and labels
/// overridden by the modifications.
pub fn apply_repair(imp: &Program, r: &RepairResult) -> Program {
    let mut q = imp.clone();
    let at = q.vars.iter().position(|v| q.special_vars.contains(v)).unwrap_or(q.vars.len());
    for (k, f) in r.fresh.iter().filter(|f| !imp.has_var(f)).enumerate() {
        q.vars.insert(at + k, f.clone());
    }
    for m in &r.mods {
        let l = q.locations.get_mut(&m.impl_loc).expect("repair location exists");
        match &m.new_expr {
            Some(e) if *e != Expr::Var(m.impl_var.clone()) => {
                l.labels.insert(m.impl_var.clone(), e.clone());
                l.lines.insert(m.impl_var.clone(), m.line);
                if !l.order.contains(&m.impl_var) {
                    l.order.push(m.impl_var.clone());
                }
            }
            _ => {
                l.labels.remove(&m.impl_var);
                l.lines.remove(&m.impl_var);
                l.order.retain(|v| *v != m.impl_var);
            }
        }
    }
    q
}

fn location_orders(p: &Program, l: LocId) -> BTreeSet<(Ident, Ident)> {
    p.loc(l).labels.iter().filter(|(v, _)| !p.is_default_label(l, v)).flat_map(|(v, e)| order(v, e)).collect()
}

/// Whether the repair inserts variables or statements, or reverses the
/// relative order of two assignments.
pub fn complexity(imp: &Program, r: &RepairResult) -> Complexity {
    let q = apply_repair(imp, r);
    let mut c = Complexity::default();
    for m in &r.mods {
        if !imp.has_var(&m.impl_var) {
            c.inserts_variable = true;
        }
        if m.new_expr.is_some() && imp.is_default_label(m.impl_loc, &m.impl_var) && !q.is_default_label(m.impl_loc, &m.impl_var) {
            c.inserts_statement = true;
        }
    }
    let touched: BTreeSet<LocId> = r.mods.iter().map(|m| m.impl_loc).collect();
    for l in touched {
        let before = location_orders(imp, l);
        let after = location_orders(&q, l);
        let assigned = |p: &Program, v: &str| !p.is_default_label(l, v);
        c.reorders |= after.iter().any(|(x, y)| {
            x != y
                && before.contains(&(y.clone(), x.clone()))
                && [x, y].iter().all(|v| assigned(imp, v) && assigned(&q, v))
        });
    }
    c
}

/// Repairs `imp` against `spec` within `opts.budget`.
pub fn repair_one(spec: &Program, imp: &Program, ins: &InputSet, opts: &RepairOptions) -> Result<RepairResult, RepairError> {
    let start = Instant::now();
    repair_until(spec, imp, ins, opts.step_limit, start, start + opts.budget)
}

fn repair_until(
    spec: &Program,
    imp: &Program,
    ins: &InputSet,
    step_limit: usize,
    start: Instant,
    deadline: Instant,
) -> Result<RepairResult, RepairError> {
    let kappa = structure_match(spec, imp).ok_or(RepairError::NoStructure)?;
    if spec.params.len() != imp.params.len() {
        return Err(RepairError::NoStructure);
    }
    let traces = spec_traces(spec, ins, step_limit).ok_or_else(|| RepairError::SpecFailed { spec: spec.name.clone() })?;
    let first_deadline = start + (deadline.saturating_duration_since(start)) * FIRST_PHASE_PERCENT / 100;
    let mut ctx = Ctx::new(spec, imp, &kappa, &traces, Some(first_deadline));
    let mut candidates = Vec::new();
    for l1 in spec.loc_ids() {
        let mut correct: BTreeMap<&Ident, Vec<ConditionalMatching>> = BTreeMap::new();
        for v1 in &spec.vars {
            correct.insert(v1, ctx.correct(l1, v1).map_err(|_| RepairError::Timeout)?);
        }
        let zero = zero_pairs(&correct.values().flatten().cloned().collect::<Vec<_>>());
        for v1 in &spec.vars {
            let cs = correct.remove(v1).unwrap_or_default();
            candidates.extend(ctx.group(l1, v1, &zero, cs).map_err(|_| RepairError::Timeout)?);
        }
        candidates.extend(delete_matchings(imp, l1, kappa[&l1]));
    }
    let fresh_map = ctx.fresh.clone();
    let mut enc = encode(candidates, spec, imp);
    let mut linked: BTreeSet<Ident> = BTreeSet::new();
    let mut previous: Option<RepairResult> = None;
    let mut initial_conflicts = None;
    let mut conflict_rounds = 0;
    loop {
        let limit = if previous.is_none() && initial_conflicts.is_none() { first_deadline } else { deadline };
        let now = Instant::now();
        if now >= limit {
            return Err(RepairError::Timeout);
        }
        let a = match solve(&enc.model, Some(limit - now)) {
            SolveOutcome::Optimal(a) => a,
            SolveOutcome::BudgetExceeded { .. } => return Err(RepairError::Timeout),
            SolveOutcome::Infeasible => {
                return match previous {
                    Some(mut r) => {
                        r.unresolved_conflicts = true;
                        Ok(r)
                    }
                    None => Err(RepairError::Unsolvable),
                }
            }
        };
        let d = decode(&enc, &a);
        let mut r = build_result(spec, imp, &kappa, &enc, &d, &fresh_map);
        let conflicts = check_order_conflicts(&enc.candidates, &d.selected, imp, &kappa, &fresh_map);
        r.initial_conflicts = *initial_conflicts.get_or_insert(conflicts.len());
        r.conflict_rounds = conflict_rounds;
        if !conflicts.is_empty() {
            for set in &conflicts {
                let row: Vec<(VarId, i64)> = set.iter().map(|i| (enc.selectors[*i], 1)).collect();
                enc.model.add_constraint(&row, Relation::Le, set.len() as i64 - 1).expect("declared");
            }
            conflict_rounds += 1;
            r.unresolved_conflicts = true;
            previous = Some(r);
            continue;
        }
        // Unmatched implementation variables keep their labels unless that
        // breaks execution; then their deletions become mandatory.
        let unmatched: BTreeSet<Ident> =
            enc.deleted.iter().filter(|(_, id)| a.value(**id)).map(|(v, _)| v.clone()).collect();
        let failing = failing_unmatched(&apply_repair(imp, &r), ins, step_limit, &unmatched);
        let to_link: Vec<Ident> = failing.into_iter().filter(|v| !linked.contains(v)).collect();
        if to_link.is_empty() {
            return Ok(r);
        }
        for v2 in to_link {
            let del = enc.deleted[&v2];
            for (i, c) in enc.candidates.iter().enumerate() {
                if c.is_deletion() && c.target == Side::Var(v2.clone()) {
                    enc.model.add_constraint(&[(enc.selectors[i], 1), (del, -1)], Relation::Ge, 0).expect("declared");
                }
            }
            linked.insert(v2);
        }
        previous = Some(r);
    }
}

/// Unmatched variables to blame when the repaired program fails: the one
/// whose label failed, or all of them when the failure is elsewhere.
fn failing_unmatched(q: &Program, ins: &InputSet, step_limit: usize, unmatched: &BTreeSet<Ident>) -> BTreeSet<Ident> {
    let mut out = BTreeSet::new();
    for o in run_all(q, ins, step_limit) {
        match o {
            RunOutcome::Ok(_) => {}
            RunOutcome::Error { var: Some(v), .. } if unmatched.contains(&v) => {
                out.insert(v);
            }
            _ => out.extend(unmatched.iter().cloned()),
        }
    }
    out
}

/// Repairs `imp` against every specification concurrently and keeps the
/// cheapest result; ties go to fewer modifications, then the smaller
/// spec id.
pub fn repair_best(specs: &[Program], imp: &Program, ins: &InputSet, opts: &RepairOptions) -> Result<RepairResult, RepairError> {
    let start = Instant::now();
    let deadline = start + opts.budget;
    let results: Vec<Result<RepairResult, RepairError>> =
        specs.par_iter().map(|s| repair_until(s, imp, ins, opts.step_limit, start, deadline)).collect();
    let mut best: Option<RepairResult> = None;
    let mut timed_out = false;
    let mut other = None;
    for r in results {
        match r {
            Ok(r) => {
                let key = |x: &RepairResult| (x.total_cost, x.mods.len(), x.spec_id.clone());
                if best.as_ref().is_none_or(|b| key(&r) < key(b)) {
                    best = Some(r);
                }
            }
            Err(RepairError::Timeout) => timed_out = true,
            Err(RepairError::NoStructure) => {}
            Err(e) => other = Some(e),
        }
    }
    match best {
        Some(r) => Ok(r),
        None if timed_out => Err(RepairError::Timeout),
        None => Err(other.unwrap_or(RepairError::NoStructure)),
    }
}
