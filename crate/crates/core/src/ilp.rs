//! Exact zero-one integer linear programming.
//!
//! [`solve`] runs a depth-first branch and bound with constraint
//! propagation to find the optimal objective value, then a second search
//! in sorted-name order that returns the lexicographically smallest
//! optimal assignment (0 before 1). [`brute_force`] enumerates in the
//! same order and serves as the test oracle.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum IlpError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("model has {0} variables; brute force is limited to {BRUTE_FORCE_LIMIT}")]
    TooLarge(usize),
}

pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// A stored constraint: `Σ coef·x  rel  rhs` with `rel` either `≥` or `=`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub terms: Vec<(VarId, i64)>,
    pub relation: Relation,
    pub rhs: i64,
}

impl Constraint {
    fn holds(&self, values: &[bool]) -> bool {
        let lhs: i64 = self.terms.iter().map(|(v, c)| if values[v.0] { *c } else { 0 }).sum();
        match self.relation {
            Relation::Ge => lhs >= self.rhs,
            Relation::Le => lhs <= self.rhs,
            Relation::Eq => lhs == self.rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IlpModel {
    names: Vec<String>,
    index: HashMap<String, VarId>,
    constraints: Vec<Constraint>,
    objective: Vec<i64>,
    sense: Sense,
}

impl IlpModel {
    pub fn new(sense: Sense) -> IlpModel {
        IlpModel { names: Vec::new(), index: HashMap::new(), constraints: Vec::new(), objective: Vec::new(), sense }
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> Result<VarId, IlpError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(IlpError::DuplicateVariable(name));
        }
        let id = VarId(self.names.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.objective.push(0);
        Ok(id)
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.names[v.0]
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn set_objective(&mut self, v: VarId, coef: i64) {
        self.objective[v.0] = coef;
    }

    pub fn objective(&self, v: VarId) -> i64 {
        self.objective[v.0]
    }

    /// Adds a constraint; `≤` is stored as the negated `≥`. Repeated
    /// variables are summed.
    pub fn add_constraint(&mut self, terms: &[(VarId, i64)], relation: Relation, rhs: i64) -> Result<(), IlpError> {
        let mut merged: BTreeMap<VarId, i64> = BTreeMap::new();
        for (v, c) in terms {
            if v.0 >= self.names.len() {
                return Err(IlpError::UnknownVariable(format!("#{}", v.0)));
            }
            *merged.entry(*v).or_insert(0) += c;
        }
        let (sign, relation) = match relation {
            Relation::Le => (-1, Relation::Ge),
            r => (1, r),
        };
        let terms = merged.into_iter().filter(|(_, c)| *c != 0).map(|(v, c)| (v, sign * c)).collect();
        self.constraints.push(Constraint { terms, relation, rhs: sign * rhs });
        Ok(())
    }

    /// Same as [`IlpModel::add_constraint`] with variables given by name.
    pub fn add_constraint_named(&mut self, terms: &[(&str, i64)], relation: Relation, rhs: i64) -> Result<(), IlpError> {
        let ids = terms
            .iter()
            .map(|(n, c)| self.var(n).map(|v| (v, *c)).ok_or_else(|| IlpError::UnknownVariable(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        self.add_constraint(&ids, relation, rhs)
    }

    fn evaluate(&self, values: &[bool]) -> i64 {
        self.objective.iter().zip(values).map(|(c, x)| if *x { *c } else { 0 }).sum()
    }

    fn feasible(&self, values: &[bool]) -> bool {
        self.constraints.iter().all(|c| c.holds(values))
    }

    fn assignment(&self, values: Vec<bool>) -> Assignment {
        let objective_value = self.evaluate(&values);
        Assignment { names: self.names.clone(), values, objective_value }
    }

    /// Variable indices in sorted-name order.
    fn sorted_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.names.len()).collect();
        order.sort_by(|a, b| self.names[*a].cmp(&self.names[*b]));
        order
    }
}

impl fmt::Display for IlpModel {
    /// LP-style dump, one constraint per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let term = |f: &mut fmt::Formatter<'_>, first: bool, c: i64, name: &str| -> fmt::Result {
            let mag = if c.abs() == 1 { String::new() } else { format!("{} ", c.abs()) };
            match (first, c < 0) {
                (true, false) => write!(f, "{mag}{name}"),
                (true, true) => write!(f, "-{mag}{name}"),
                (false, false) => write!(f, "+ {mag}{name}"),
                (false, true) => write!(f, "- {mag}{name}"),
            }
        };
        writeln!(f, "{}", if self.sense == Sense::Min { "minimize" } else { "maximize" })?;
        write!(f, "  obj:")?;
        let mut first = true;
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0 {
                write!(f, " ")?;
                term(f, first, *c, &self.names[i])?;
                first = false;
            }
        }
        if first {
            write!(f, " 0")?;
        }
        writeln!(f)?;
        writeln!(f, "subject to")?;
        for (k, c) in self.constraints.iter().enumerate() {
            write!(f, "  c{k}:")?;
            let mut first = true;
            for (v, coef) in &c.terms {
                write!(f, " ")?;
                term(f, first, *coef, &self.names[v.0])?;
                first = false;
            }
            if first {
                write!(f, " 0")?;
            }
            let rel = match c.relation {
                Relation::Ge => ">=",
                Relation::Le => "<=",
                Relation::Eq => "=",
            };
            writeln!(f, " {rel} {}", c.rhs)?;
        }
        writeln!(f, "binary")?;
        for n in &self.names {
            writeln!(f, "  {n}")?;
        }
        write!(f, "end")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    names: Vec<String>,
    values: Vec<bool>,
    pub objective_value: i64,
}

impl Assignment {
    pub fn value(&self, v: VarId) -> bool {
        self.values[v.0]
    }

    pub fn value_of(&self, name: &str) -> Option<bool> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    /// Variables set to 1, by name.
    pub fn ones(&self) -> Vec<&str> {
        self.names.iter().zip(&self.values).filter(|(_, x)| **x).map(|(n, _)| n.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveOutcome {
    Optimal(Assignment),
    Infeasible,
    BudgetExceeded { incumbent: Option<Assignment> },
}

impl SolveOutcome {
    pub fn optimal(&self) -> Option<&Assignment> {
        match self {
            SolveOutcome::Optimal(a) => Some(a),
            _ => None,
        }
    }
}

/// Exhaustive search in sorted-name lexicographic order, keeping the first
/// optimal assignment.
pub fn brute_force(m: &IlpModel) -> Result<Option<Assignment>, IlpError> {
    let n = m.num_vars();
    if n > BRUTE_FORCE_LIMIT {
        return Err(IlpError::TooLarge(n));
    }
    let order = m.sorted_order();
    let mut best: Option<(i64, Vec<bool>)> = None;
    let mut values = vec![false; n];
    for k in 0u64..(1u64 << n) {
        for (pos, &var) in order.iter().enumerate() {
            values[var] = (k >> (n - 1 - pos)) & 1 == 1;
        }
        if !m.feasible(&values) {
            continue;
        }
        let obj = m.evaluate(&values);
        let better = match &best {
            None => true,
            Some((b, _)) => match m.sense {
                Sense::Min => obj < *b,
                Sense::Max => obj > *b,
            },
        };
        if better {
            best = Some((obj, values.clone()));
        }
    }
    Ok(best.map(|(_, v)| m.assignment(v)))
}

const FREE: i8 = -1;

/// Search state over `≥` rows with the objective normalized to minimize.
struct Search {
    rows: Vec<(Vec<(usize, i64)>, i64)>,
    watch: Vec<Vec<(usize, i64)>>,
    maxact: Vec<i64>,
    val: Vec<i8>,
    trail: Vec<usize>,
    cost: Vec<i64>,
    fixed_cost: i64,
    free_negative: i64,
    groups: Vec<Vec<usize>>,
    by_magnitude: Vec<usize>,
    lex: Vec<usize>,
    deadline: Option<Instant>,
    nodes: u64,
    timed_out: bool,
    best: Option<(i64, Vec<bool>)>,
}

impl Search {
    fn new(model: &IlpModel, deadline: Option<Instant>) -> Search {
        let n = model.num_vars();
        let sign = if model.sense == Sense::Min { 1 } else { -1 };
        let cost: Vec<i64> = model.objective.iter().map(|c| sign * c).collect();
        let mut rows = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for c in &model.constraints {
            let terms: Vec<(usize, i64)> = c.terms.iter().map(|(v, k)| (v.0, *k)).collect();
            if c.relation == Relation::Eq {
                if c.rhs == 1 && terms.len() > 1 && terms.iter().all(|(_, k)| *k == 1) {
                    groups.push(terms.iter().map(|(v, _)| *v).collect());
                }
                rows.push((terms.iter().map(|(v, k)| (*v, -k)).collect(), -c.rhs));
            }
            rows.push((terms, c.rhs));
        }
        // Disjoint exactly-one groups for the bound, costly groups first.
        let group_weight = |g: &Vec<usize>| g.iter().map(|v| cost[*v].max(0)).min().unwrap_or(0);
        groups.sort_by_key(|g| std::cmp::Reverse(group_weight(g)));
        let mut used = vec![false; n];
        let mut disjoint = Vec::new();
        for g in groups {
            if g.iter().all(|v| !used[*v]) {
                for v in &g {
                    used[*v] = true;
                }
                disjoint.push(g);
            }
        }
        let mut watch = vec![Vec::new(); n];
        let mut maxact = Vec::with_capacity(rows.len());
        for (r, (terms, _)) in rows.iter().enumerate() {
            for (v, k) in terms {
                watch[*v].push((r, *k));
            }
            maxact.push(terms.iter().map(|(_, k)| (*k).max(0)).sum());
        }
        let mut by_magnitude: Vec<usize> = (0..n).collect();
        by_magnitude.sort_by_key(|v| std::cmp::Reverse(cost[*v].abs()));
        let free_negative = cost.iter().filter(|c| **c < 0).sum();
        Search {
            rows,
            watch,
            maxact,
            val: vec![FREE; n],
            trail: Vec::new(),
            cost,
            fixed_cost: 0,
            free_negative,
            groups: disjoint,
            by_magnitude,
            lex: model.sorted_order(),
            deadline,
            nodes: 0,
            timed_out: false,
            best: None,
        }
    }

    fn set(&mut self, v: usize, x: bool) {
        self.val[v] = x as i8;
        self.trail.push(v);
        if self.cost[v] < 0 {
            self.free_negative -= self.cost[v];
        }
        if x {
            self.fixed_cost += self.cost[v];
        }
        for &(r, k) in &self.watch[v] {
            // Free contributes max(k, 0); fixed contributes k·x.
            self.maxact[r] += k * (x as i64) - k.max(0);
        }
    }

    fn unset_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().unwrap();
            let x = self.val[v] == 1;
            self.val[v] = FREE;
            if self.cost[v] < 0 {
                self.free_negative += self.cost[v];
            }
            if x {
                self.fixed_cost -= self.cost[v];
            }
            for &(r, k) in &self.watch[v] {
                self.maxact[r] -= k * (x as i64) - k.max(0);
            }
        }
    }

    /// Fixes `v := x` and propagates; false on conflict (state must then be
    /// rolled back by the caller).
    fn assign(&mut self, v: usize, x: bool) -> bool {
        if self.val[v] != FREE {
            return self.val[v] == x as i8;
        }
        self.set(v, x);
        let mut queue = vec![v];
        let mut pops = 0u32;
        while let Some(u) = queue.pop() {
            pops += 1;
            if pops % 64 == 0 && self.check_clock() {
                return false;
            }
            for i in 0..self.watch[u].len() {
                let r = self.watch[u][i].0;
                let rhs = self.rows[r].1;
                let act = self.maxact[r];
                if act < rhs {
                    return false;
                }
                for j in 0..self.rows[r].0.len() {
                    let (w, k) = self.rows[r].0[j];
                    if self.val[w] != FREE {
                        continue;
                    }
                    let act = self.maxact[r];
                    if k > 0 && act - k < rhs {
                        self.set(w, true);
                        queue.push(w);
                    } else if k < 0 && act + k < rhs {
                        self.set(w, false);
                        queue.push(w);
                    }
                }
            }
        }
        true
    }

    fn initial_propagation(&mut self) -> bool {
        for r in 0..self.rows.len() {
            if r % 64 == 0 && self.check_clock() {
                return false;
            }
            if self.maxact[r] < self.rows[r].1 {
                return false;
            }
            for j in 0..self.rows[r].0.len() {
                let (w, k) = self.rows[r].0[j];
                if self.val[w] != FREE {
                    continue;
                }
                let act = self.maxact[r];
                let forced = if k > 0 && act - k < self.rows[r].1 {
                    Some(true)
                } else if k < 0 && act + k < self.rows[r].1 {
                    Some(false)
                } else {
                    None
                };
                if let Some(x) = forced {
                    if !self.assign(w, x) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn lower_bound(&self) -> i64 {
        let mut lb = self.fixed_cost + self.free_negative;
        for g in &self.groups {
            if g.iter().any(|v| self.val[*v] == 1) {
                continue;
            }
            let m = g.iter().filter(|v| self.val[**v] == FREE).map(|v| self.cost[*v].max(0)).min();
            lb += m.unwrap_or(0);
        }
        lb
    }

    fn out_of_time(&mut self) -> bool {
        self.nodes += 1;
        if self.timed_out {
            return true;
        }
        self.check_clock();
        self.timed_out
    }

    /// Nodes can be expensive on large models, so the clock is read at
    /// every node and periodically during propagation.
    fn check_clock(&mut self) -> bool {
        if !self.timed_out && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out = true;
        }
        self.timed_out
    }

    fn snapshot(&self) -> Vec<bool> {
        self.val.iter().map(|x| *x == 1).collect()
    }

    /// Branch and bound for the optimal value.
    fn optimize(&mut self) {
        if self.out_of_time() {
            return;
        }
        let lb = self.lower_bound();
        if let Some((b, _)) = &self.best {
            if lb >= *b {
                return;
            }
        }
        let mut pick: Option<usize> = None;
        let mut pick_free = usize::MAX;
        for (gi, g) in self.groups.iter().enumerate() {
            if g.iter().any(|v| self.val[*v] == 1) {
                continue;
            }
            let free = g.iter().filter(|v| self.val[**v] == FREE).count();
            if free < pick_free {
                pick_free = free;
                pick = Some(gi);
            }
        }
        if let Some(gi) = pick {
            let mut cands: Vec<usize> = self.groups[gi].iter().copied().filter(|v| self.val[*v] == FREE).collect();
            cands.sort_by_key(|v| (self.cost[*v], *v));
            let mark = self.trail.len();
            for v in cands {
                if self.val[v] != FREE {
                    continue;
                }
                let inner = self.trail.len();
                if self.assign(v, true) {
                    self.optimize();
                }
                self.unset_to(inner);
                if self.timed_out || !self.assign(v, false) {
                    break;
                }
                if self.groups[gi].iter().any(|u| self.val[*u] == 1) {
                    // Propagation completed the group.
                    self.optimize();
                    break;
                }
                if let Some((b, _)) = &self.best {
                    if self.lower_bound() >= *b {
                        break;
                    }
                }
            }
            self.unset_to(mark);
            return;
        }
        let Some(v) = self.by_magnitude.iter().copied().find(|v| self.val[*v] == FREE) else {
            let obj = self.fixed_cost;
            if self.best.as_ref().is_none_or(|(b, _)| obj < *b) {
                self.best = Some((obj, self.snapshot()));
            }
            return;
        };
        let first = self.cost[v] < 0;
        for x in [first, !first] {
            let mark = self.trail.len();
            if self.assign(v, x) {
                self.optimize();
            }
            self.unset_to(mark);
            if self.timed_out {
                return;
            }
        }
    }

    /// Depth-first search in sorted-name order, 0 before 1, for the first
    /// assignment reaching `target`.
    fn lex_first(&mut self, pos: usize, target: i64) -> Option<Vec<bool>> {
        if self.out_of_time() {
            return None;
        }
        if self.lower_bound() > target {
            return None;
        }
        let mut p = pos;
        while p < self.lex.len() && self.val[self.lex[p]] != FREE {
            p += 1;
        }
        if p == self.lex.len() {
            return (self.fixed_cost <= target).then(|| self.snapshot());
        }
        let v = self.lex[p];
        for x in [false, true] {
            let mark = self.trail.len();
            if self.assign(v, x) {
                if let Some(s) = self.lex_first(p + 1, target) {
                    return Some(s);
                }
            }
            self.unset_to(mark);
            if self.timed_out {
                return None;
            }
        }
        None
    }
}

/// Solves `m` exactly within the optional time budget.
pub fn solve(m: &IlpModel, budget: Option<Duration>) -> SolveOutcome {
    let deadline = budget.map(|b| Instant::now() + b);
    let mut s = Search::new(m, deadline);
    if !s.initial_propagation() {
        if s.timed_out {
            return SolveOutcome::BudgetExceeded { incumbent: None };
        }
        return SolveOutcome::Infeasible;
    }
    let root = s.trail.len();
    s.optimize();
    let Some((best, incumbent)) = s.best.take() else {
        return if s.timed_out { SolveOutcome::BudgetExceeded { incumbent: None } } else { SolveOutcome::Infeasible };
    };
    if s.timed_out {
        return SolveOutcome::BudgetExceeded { incumbent: Some(m.assignment(incumbent)) };
    }
    s.unset_to(root);
    match s.lex_first(0, best) {
        Some(values) => SolveOutcome::Optimal(m.assignment(values)),
        None if s.timed_out => SolveOutcome::BudgetExceeded { incumbent: Some(m.assignment(incumbent)) },
        None => unreachable!("an assignment with the optimal value exists"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_minimization() {
        let mut m = IlpModel::new(Sense::Min);
        let x1 = m.add_var("x1").unwrap();
        let x2 = m.add_var("x2").unwrap();
        m.set_objective(x1, 1);
        m.set_objective(x2, 2);
        m.add_constraint(&[(x1, 1), (x2, 1)], Relation::Eq, 1).unwrap();
        let a = solve(&m, None);
        let a = a.optimal().unwrap();
        assert!(a.value(x1) && !a.value(x2));
        assert_eq!(a.objective_value, 1);
        assert_eq!(brute_force(&m).unwrap().unwrap(), a.clone());
    }

    #[test]
    fn contradictory_constraints_are_infeasible() {
        let mut m = IlpModel::new(Sense::Min);
        m.add_var("x1").unwrap();
        m.add_constraint_named(&[("x1", 1)], Relation::Eq, 1).unwrap();
        m.add_constraint_named(&[("x1", 1)], Relation::Eq, 0).unwrap();
        assert_eq!(solve(&m, None), SolveOutcome::Infeasible);
        assert_eq!(brute_force(&m).unwrap(), None);
    }

    #[test]
    fn unknown_variables_are_rejected() {
        let mut m = IlpModel::new(Sense::Min);
        assert_eq!(m.add_constraint_named(&[("y", 1)], Relation::Ge, 0), Err(IlpError::UnknownVariable("y".into())));
    }

    #[test]
    fn ties_break_toward_the_lexicographically_smallest_assignment() {
        let mut m = IlpModel::new(Sense::Min);
        for n in ["b", "a", "c"] {
            m.add_var(n).unwrap();
        }
        m.add_constraint_named(&[("a", 1), ("b", 1), ("c", 1)], Relation::Eq, 1).unwrap();
        let a = solve(&m, None);
        assert_eq!(a.optimal().unwrap().ones(), vec!["c"]);
    }

    #[test]
    fn le_constraints_exclude_the_previous_optimum() {
        let mut m = IlpModel::new(Sense::Min);
        let a = m.add_var("a").unwrap();
        let b = m.add_var("b").unwrap();
        let c = m.add_var("c").unwrap();
        m.set_objective(c, 5);
        m.add_constraint(&[(a, 1), (c, 1)], Relation::Ge, 1).unwrap();
        m.add_constraint(&[(b, 1), (c, 1)], Relation::Ge, 1).unwrap();
        assert_eq!(solve(&m, None).optimal().unwrap().objective_value, 0);
        m.add_constraint(&[(a, 1), (b, 1)], Relation::Le, 1).unwrap();
        let s = solve(&m, None);
        assert_eq!(s.optimal().unwrap().objective_value, 5);
        assert_eq!(Some(s.optimal().unwrap().clone()), brute_force(&m).unwrap());
    }

    #[test]
    fn lp_dump_lists_every_constraint() {
        let mut m = IlpModel::new(Sense::Max);
        let x = m.add_var("x").unwrap();
        let y = m.add_var("y").unwrap();
        m.set_objective(x, 3);
        m.add_constraint(&[(x, 1), (y, -2)], Relation::Le, 0).unwrap();
        let text = m.to_string();
        assert!(text.starts_with("maximize\n  obj: 3 x\n"), "{text}");
        assert!(text.contains("c0: -x + 2 y >= 0"), "{text}");
    }
}
