//! One check per acceptance criterion. Each returns a short summary on
//! success and a description of the first failure otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use progfix::cli::{cmd_cluster, cmd_eval};
use progfix::cluster::{cluster, load_store};
use progfix::frontend::format_expr;
use progfix::ilp::{brute_force, solve, IlpModel, Relation, Sense, SolveOutcome};
use progfix::interp::InputSet;
use progfix::matching::matches;
use progfix::model::{Expr, Op, Program, Value};
use progfix::repair::{apply_repair, repair_best, repair_one, RepairOptions};
use progfix::treedist::tree_distance;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::*;

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn opts(secs: u64) -> RepairOptions {
    RepairOptions { budget: Duration::from_secs(secs), step_limit: 100_000 }
}

fn reps(root: &Path) -> Vec<Program> {
    load_store(root).unwrap().representatives().map(|(_, e)| e.program.clone()).collect()
}

/// Derivative attempts: two clusters led by C1 and C3, the one-operator
/// repair of I1 and the inserted statement of I2.
pub fn golden() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    copy_problems(&["derivatives"], tmp.path());
    let dir = tmp.path().join("derivatives");
    let s = cmd_cluster(&dir, &dir.join("attempts")).map_err(|e| e.to_string())?;
    let leaders: Vec<&str> = s.clusters.iter().map(|(r, _)| r.as_str()).collect();
    ensure(s.s == 2 && leaders == ["C1", "C3"], || format!("clusters {:?}", s.clusters))?;
    let specs = reps(&dir);
    let pb = problem("derivatives");

    let t = Instant::now();
    let r = repair_best(&specs, &program("derivatives", "I1"), &pb.inputs, &opts(60)).map_err(|e| format!("I1: {e}"))?;
    let t1 = t.elapsed();
    ensure(r.total_cost == 1 && r.mods.len() == 1, || format!("I1 cost {} with {} modifications", r.total_cost, r.mods.len()))?;
    let m = &r.mods[0];
    ensure(
        m.impl_var == "$cond" && m.line == 3 && m.old_text == "p < len(poly) + 1" && m.new_text.as_deref() == Some("p < len(poly) - 1"),
        || format!("I1 modification {m:?}"),
    )?;
    ensure(t1 < Duration::from_secs(10), || format!("I1 took {t1:?}"))?;

    let imp = program("derivatives", "I2");
    let t = Instant::now();
    let r = repair_best(&specs, &imp, &pb.inputs, &opts(60)).map_err(|e| format!("I2: {e}"))?;
    let t2 = t.elapsed();
    ensure(r.total_cost == 9 && r.mods.len() == 2, || format!("I2 cost {} with {} modifications", r.total_cost, r.mods.len()))?;
    let inserted = r.mods.iter().any(|m| {
        matches!(&m.new_expr, Some(Expr::Op(Op::Ite, a))
            if matches!(&a[1], Expr::Op(Op::Append, b) if b[1] == Expr::Const(Value::Float(0.0))))
    });
    ensure(inserted, || "I2 lacks the conditional append of 0.0".into())?;
    let c1 = program("derivatives", "C1");
    ensure(matches(&c1, &apply_repair(&imp, &r), &pb.inputs, 100_000).is_some(), || "repaired I2 does not match C1".into())?;
    ensure(t2 < Duration::from_secs(10), || format!("I2 took {t2:?}"))?;
    Ok(format!("2 clusters (C1, C3); I1 cost 1 in {:.2}s; I2 cost 9 in {:.2}s", t1.as_secs_f64(), t2.as_secs_f64()))
}

/// Mutants of every correct attempt, repaired against the attempt's
/// cluster representative; every successful repair must match it.
pub fn soundness() -> Outcome {
    let mut jobs: Vec<(&str, Program, SourceUnit, Program, &'static str)> = Vec::new();
    let mut per_problem: BTreeMap<&str, usize> = BTreeMap::new();
    for name in PROBLEMS {
        let pb = problem(name);
        let correct = correct_attempts(name);
        let c = cluster(correct.clone(), &pb.inputs, pb.step_limit()).unwrap();
        for (rep, members) in &c.clusters {
            let spec = c.programs[rep].program.clone();
            for m in members {
                for (kind, unit, prog) in mutants(&c.programs[m].source) {
                    if !pb.is_correct(&prog) {
                        *per_problem.entry(name).or_default() += 1;
                        jobs.push((name, spec.clone(), unit, prog, kind));
                    }
                }
            }
        }
    }
    let inputs: BTreeMap<&str, InputSet> = PROBLEMS.iter().map(|n| (*n, problem(n).inputs)).collect();
    let results: Vec<(bool, bool, &'static str, String)> = jobs
        .par_iter()
        .map(|(name, spec, unit, imp, kind)| match repair_one(spec, imp, &inputs[name], &opts(20)) {
            Ok(r) => {
                let ok = matches(spec, &apply_repair(imp, &r), &inputs[name], 100_000).is_some();
                (true, ok, *kind, format!("{name}/{}:\n{}", unit.name, unit.text))
            }
            Err(_) => (false, true, *kind, String::new()),
        })
        .collect();
    let repaired = results.iter().filter(|r| r.0).count();
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for r in results.iter().filter(|r| r.0) {
        *kinds.entry(r.2).or_default() += 1;
    }
    if let Some(bad) = results.iter().find(|r| !r.1) {
        return Err(format!("repaired program does not match its spec: {}", bad.3));
    }
    ensure(jobs.len() >= 200, || format!("only {} mutants", jobs.len()))?;
    ensure(per_problem.len() >= 3, || format!("mutants from {} problems", per_problem.len()))?;
    ensure(repaired * 2 >= jobs.len(), || format!("only {repaired} of {} mutants repaired", jobs.len()))?;
    Ok(format!("{} mutants over {} problems, {repaired} repaired, all sound ({kinds:?})", jobs.len(), per_problem.len()))
}

pub fn random_model(rng: &mut StdRng, max_vars: usize) -> IlpModel {
    let n = rng.gen_range(1..=max_vars);
    let sense = if rng.gen_bool(0.7) { Sense::Min } else { Sense::Max };
    let mut m = IlpModel::new(sense);
    let mut names: Vec<String> = (0..n).map(|i| format!("v{}_{}", rng.gen_range(0..100), i)).collect();
    names.shuffle(rng);
    let ids: Vec<_> = names.iter().map(|s| m.add_var(s.clone()).unwrap()).collect();
    for id in &ids {
        m.set_objective(*id, rng.gen_range(-5..=5));
    }
    for _ in 0..rng.gen_range(0..=n + 2) {
        let k = rng.gen_range(1..=n.min(5));
        let terms: Vec<_> = (0..k).map(|_| (ids[rng.gen_range(0..n)], rng.gen_range(-3..=3))).collect();
        let rel = match rng.gen_range(0..3) {
            0 => Relation::Ge,
            1 => Relation::Le,
            _ => Relation::Eq,
        };
        m.add_constraint(&terms, rel, rng.gen_range(-2..=3)).unwrap();
    }
    // Exactly-one groups, the shape the repair encoding produces.
    if n >= 3 && rng.gen_bool(0.5) {
        let a = rng.gen_range(0..n - 2);
        m.add_constraint(&[(ids[a], 1), (ids[a + 1], 1), (ids[a + 2], 1)], Relation::Eq, 1).unwrap();
    }
    m
}

/// Random 0-1 models against exhaustive enumeration with the same
/// tie-break.
pub fn ilp_oracle(models: usize, seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut feasible = 0;
    for i in 0..models {
        let m = random_model(&mut rng, 12);
        let exact = brute_force(&m).map_err(|e| e.to_string())?;
        match (solve(&m, None), exact) {
            (SolveOutcome::Optimal(a), Some(b)) => {
                ensure(a.objective_value == b.objective_value, || format!("model {i}: objective {} vs {}\n{m}", a.objective_value, b.objective_value))?;
                ensure(a == b, || format!("model {i}: assignments differ\n{m}"))?;
                feasible += 1;
            }
            (SolveOutcome::Infeasible, None) => {}
            (other, exact) => return Err(format!("model {i}: solver {other:?} vs enumeration {exact:?}\n{m}")),
        }
    }
    Ok(format!("{models} models agree ({feasible} feasible)"))
}

/// Preorder node table of an expression: labels and subtree sizes.
struct Nodes {
    labels: Vec<String>,
    size: Vec<usize>,
}

impl Nodes {
    fn new(e: &Expr) -> Nodes {
        let mut n = Nodes { labels: Vec::new(), size: Vec::new() };
        n.visit(e);
        n
    }

    fn visit(&mut self, e: &Expr) -> usize {
        let i = self.labels.len();
        self.labels.push(e.node_label());
        self.size.push(0);
        let mut s = 1;
        for c in e.children() {
            s += self.visit(c);
        }
        self.size[i] = s;
        s
    }

    /// 0: `a` is a proper ancestor of `b`, 1: `a` lies left of `b`
    /// (requires `a < b`).
    fn relation(&self, a: usize, b: usize) -> u8 {
        if b < a + self.size[a] {
            0
        } else {
            1
        }
    }
}

/// Edit distance as the cheapest valid edit mapping, by exhaustive
/// search over all one-to-one maps that preserve ancestry and sibling
/// order. Unit costs: unmapped nodes are deleted or inserted, mapped
/// nodes with different labels are relabeled.
pub fn exhaustive_distance(a: &Expr, b: &Expr) -> usize {
    let (x, y) = (Nodes::new(a), Nodes::new(b));
    let mut best = x.labels.len() + y.labels.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    fn go(i: usize, x: &Nodes, y: &Nodes, pairs: &mut Vec<(usize, usize)>, relabels: usize, best: &mut usize) {
        let m = pairs.len();
        let cost = (x.labels.len() - m) + (y.labels.len() - m) + relabels;
        // Remaining nodes can at best all be mapped without relabels.
        let remaining = (x.labels.len() - i).min(y.labels.len() - m);
        if cost.saturating_sub(2 * remaining) >= *best {
            return;
        }
        if i == x.labels.len() {
            *best = cost.min(*best);
            return;
        }
        go(i + 1, x, y, pairs, relabels, best);
        for j in 0..y.labels.len() {
            let ok = pairs.iter().all(|&(p, q)| q < j && x.relation(p, i) == y.relation(q, j));
            if ok {
                pairs.push((i, j));
                go(i + 1, x, y, pairs, relabels + usize::from(x.labels[i] != y.labels[j]), best);
                pairs.pop();
            }
        }
    }
    go(0, &x, &y, &mut pairs, 0, &mut best);
    best
}

/// Distinct subexpressions of at most `max_nodes` nodes across every
/// corpus attempt.
pub fn corpus_subexpressions(max_nodes: usize) -> Vec<Expr> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut names: Vec<&str> = PROBLEMS.to_vec();
    names.push("dense");
    for name in names {
        for id in attempt_ids(name) {
            let p = program(name, &id);
            for loc in p.locations.values() {
                for e in loc.labels.values() {
                    e.walk(&mut |n: &Expr| {
                        if n.node_count() <= max_nodes && seen.insert(format!("{n:?}")) {
                            out.push(n.clone());
                        }
                    });
                }
            }
        }
    }
    out
}

pub fn tree_edit_oracle() -> Outcome {
    let p = |s: &str| progfix::frontend::parse_expr(s).unwrap();
    let anchored = [(p("p < len(poly) + 1"), p("p < len(poly) - 1"), 1), (p("p < len(poly) + 1"), p("res < len(poly) - 1"), 2)];
    for (a, b, d) in &anchored {
        let got = tree_distance(a, b);
        ensure(got == *d, || format!("{} vs {}: {got}, expected {d}", format_expr(a), format_expr(b)))?;
    }
    let exprs = corpus_subexpressions(6);
    let pairs: Vec<(usize, usize)> = (0..exprs.len()).flat_map(|i| (i..exprs.len()).map(move |j| (i, j))).collect();
    let bad = pairs.par_iter().find_any(|(i, j)| {
        let (a, b) = (&exprs[*i], &exprs[*j]);
        let d = tree_distance(a, b);
        d != exhaustive_distance(a, b) || d != tree_distance(b, a)
    });
    if let Some((i, j)) = bad {
        let (a, b) = (&exprs[*i], &exprs[*j]);
        return Err(format!(
            "{} vs {}: fast {} exhaustive {}",
            format_expr(a),
            format_expr(b),
            tree_distance(a, b),
            exhaustive_distance(a, b)
        ));
    }
    Ok(format!("{} pairs over {} corpus subexpressions, both anchored distances exact", pairs.len(), exprs.len()))
}

/// Every corpus clustered under ten shuffles of attempt and input order;
/// members match their representative and representatives are pairwise
/// unmatched.
pub fn clustering_invariants(shuffles: usize) -> Outcome {
    let mut names: Vec<&str> = PROBLEMS.to_vec();
    names.push("dense");
    let mut checked = 0;
    for name in names {
        let pb = problem(name);
        let correct = correct_attempts(name);
        let mut rng = StdRng::seed_from_u64(42);
        for round in 0..=shuffles {
            let mut attempts = correct.clone();
            let mut inputs = pb.inputs.inputs().to_vec();
            if round > 0 {
                attempts.shuffle(&mut rng);
                inputs.shuffle(&mut rng);
            }
            let ins = InputSet::new(inputs).unwrap();
            let order: Vec<String> = attempts.iter().map(|a| a.0.clone()).collect();
            let c = cluster(attempts, &ins, pb.step_limit()).map_err(|e| format!("{name}: {e}"))?;
            c.audit(&ins, pb.step_limit()).map_err(|e| format!("{name} in order {order:?}: {e}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} clusterings audited"))
}

/// The Fibonacci pair: a conflict on the first solve, resolved by added
/// constraints, with a repaired program matching its reference.
pub fn order_conflict() -> Outcome {
    let pb = problem("fibonacci");
    let (spec, imp) = (program("fibonacci", "S1"), program("fibonacci", "E1"));
    let r = repair_one(&spec, &imp, &pb.inputs, &opts(60)).map_err(|e| e.to_string())?;
    ensure(r.initial_conflicts >= 1, || "no conflict on the first solve".into())?;
    ensure(r.conflict_rounds >= 1 && !r.unresolved_conflicts, || format!("rounds {} unresolved {}", r.conflict_rounds, r.unresolved_conflicts))?;
    ensure(matches(&spec, &apply_repair(&imp, &r), &pb.inputs, 100_000).is_some(), || "repaired program does not match".into())?;
    Ok(format!("{} initial conflicts, resolved after {} rounds, cost {}", r.initial_conflicts, r.conflict_rounds, r.total_cost))
}

/// The eval command's RC column counts the I2 insertion and a repaired
/// statement swap.
pub fn complicated_repairs() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    copy_problems(&["derivatives", "fibonacci"], tmp.path());
    let mut insertions = 0;
    let mut reorders = 0;
    let mut rows = Vec::new();
    for name in ["derivatives", "fibonacci"] {
        let dir = tmp.path().join(name);
        cmd_cluster(&dir, &dir.join("attempts")).map_err(|e| e.to_string())?;
        let row = cmd_eval(&dir, &dir.join("attempts"), Duration::from_secs(60), 2).map_err(|e| e.to_string())?;
        let get = |id: &str| row.attempts.iter().find(|a| a.id == id).and_then(|a| a.complexity);
        if name == "derivatives" {
            ensure(row.n == 5 && row.nc == 3 && row.ni == 2 && row.r == 2 && row.rc == 1, || format!("derivatives row {}", row.row()))?;
            let i2 = get("I2").ok_or("I2 not repaired")?;
            ensure(i2.inserts_statement, || "I2 repair inserts no statement".into())?;
            ensure(get("I1").is_some_and(|c| !c.is_complicated()), || "I1 counted as complicated".into())?;
        } else {
            let w1 = get("W1").ok_or("swap mutant W1 not repaired")?;
            ensure(w1.reorders, || "W1 repair is not a reorder".into())?;
        }
        for a in &row.attempts {
            insertions += a.complexity.is_some_and(|c| c.inserts_statement || c.inserts_variable) as usize;
            reorders += a.complexity.is_some_and(|c| c.reorders) as usize;
        }
        rows.push(format!("{} RC={}", name, row.rc));
    }
    ensure(insertions >= 1 && reorders >= 1, || format!("{insertions} insertions, {reorders} reorders"))?;
    Ok(format!("{}; {insertions} insertion and {reorders} reorder repairs", rows.join(", ")))
}

/// The dense attempt under a one-second budget: exit code 3 and no
/// repair printed.
pub fn timeout_behavior() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    copy_problems(&["dense"], tmp.path());
    let dir = tmp.path().join("dense");
    cmd_cluster(&dir, &dir.join("attempts")).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_progfix"))
        .args(["repair", dir.to_str().unwrap(), dir.join("attempts/Z1.mini").to_str().unwrap(), "--timeout", "1"])
        .output()
        .unwrap();
    let elapsed = t.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.code() == Some(3), || format!("exit status {:?}, output {stdout}", out.status))?;
    ensure(!stdout.contains("modifications") && !stdout.contains("spec:"), || format!("partial repair printed: {stdout}"))?;
    ensure(elapsed < Duration::from_secs(3), || format!("took {elapsed:?}"))?;
    Ok(format!("exit 3 after {:.2}s", elapsed.as_secs_f64()))
}
