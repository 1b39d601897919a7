#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use progfix::frontend::{compile, parse, print_function, Function, SourceUnit, Stmt, StmtKind};
use progfix::model::{Expr, Op, Program, Value};
use progfix::problem::Problem;

pub const PROBLEMS: &[&str] = &["derivatives", "fibonacci", "oddTuples", "polynomials"];

pub fn corpus_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

pub fn problem(name: &str) -> Problem {
    Problem::load(&corpus_dir(name)).unwrap()
}

pub fn source(problem: &str, attempt: &str) -> SourceUnit {
    let path = corpus_dir(problem).join("attempts").join(format!("{attempt}.mini"));
    SourceUnit::new(attempt, fs::read_to_string(path).unwrap())
}

pub fn program(problem: &str, attempt: &str) -> Program {
    compile(&source(problem, attempt)).unwrap()
}

/// Attempt ids of a corpus problem, sorted.
pub fn attempt_ids(problem: &str) -> Vec<String> {
    let mut ids: Vec<String> = fs::read_dir(corpus_dir(problem).join("attempts"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "mini"))
        .map(|p| p.file_stem().unwrap().to_str().unwrap().to_string())
        .collect();
    ids.sort();
    ids
}

/// Correct attempts of a corpus problem in id order.
pub fn correct_attempts(name: &str) -> Vec<(String, SourceUnit, Program)> {
    let pb = problem(name);
    attempt_ids(name)
        .into_iter()
        .map(|id| {
            let unit = source(name, &id);
            let prog = compile(&unit).unwrap();
            (id, unit, prog)
        })
        .filter(|(_, _, p)| pb.is_correct(p))
        .collect()
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            fs::copy(e.path(), target).unwrap();
        }
    }
}

/// Copies corpus problems into `root`, without any existing store.
pub fn copy_problems(names: &[&str], root: &Path) {
    for n in names {
        copy_dir(&corpus_dir(n), &root.join(n));
        let store = root.join(n).join("clusters");
        if store.exists() {
            fs::remove_dir_all(store).unwrap();
        }
    }
}

// Mutation operators.

fn flip(op: Op) -> Option<Op> {
    Some(match op {
        Op::Add => Op::Sub,
        Op::Sub => Op::Add,
        Op::Mul => Op::Add,
        Op::Lt => Op::Le,
        Op::Le => Op::Lt,
        Op::Gt => Op::Ge,
        Op::Ge => Op::Gt,
        Op::Eq => Op::Ne,
        Op::Ne => Op::Eq,
        Op::And => Op::Or,
        Op::Or => Op::And,
        _ => return None,
    })
}

fn perturb(v: &Value) -> Option<Value> {
    match v {
        Value::Int(i) => Some(Value::Int(i + 1)),
        Value::Float(x) => Some(Value::Float(x + 1.0)),
        _ => None,
    }
}

/// Single-node operator flips and constant perturbations of `e`.
pub fn expr_mutants(e: &Expr) -> Vec<(&'static str, Expr)> {
    let mut out = Vec::new();
    match e {
        Expr::Const(c) => {
            if let Some(c) = perturb(c) {
                out.push(("constant", Expr::Const(c)));
            }
        }
        Expr::Op(op, args) => {
            if let Some(o) = flip(*op) {
                out.push(("operator", Expr::Op(o, args.clone())));
            }
            for (i, a) in args.iter().enumerate() {
                for (k, m) in expr_mutants(a) {
                    let mut args = args.clone();
                    args[i] = m;
                    out.push((k, Expr::Op(*op, args)));
                }
            }
        }
        _ => {}
    }
    out
}

fn stmt_mutants(s: &Stmt) -> Vec<(&'static str, Stmt)> {
    let with = |kind: StmtKind| Stmt { kind, line: s.line };
    let mut out = Vec::new();
    match &s.kind {
        StmtKind::Assign(v, e) => {
            out.extend(expr_mutants(e).into_iter().map(|(k, e)| (k, with(StmtKind::Assign(v.clone(), e)))));
        }
        StmtKind::Return(e) => {
            out.extend(expr_mutants(e).into_iter().map(|(k, e)| (k, with(StmtKind::Return(e)))));
        }
        StmtKind::If(c, t, f) => {
            out.extend(expr_mutants(c).into_iter().map(|(k, c)| (k, with(StmtKind::If(c, t.clone(), f.clone())))));
            out.extend(block_mutants(t).into_iter().map(|(k, t)| (k, with(StmtKind::If(c.clone(), t, f.clone())))));
            out.extend(block_mutants(f).into_iter().map(|(k, f)| (k, with(StmtKind::If(c.clone(), t.clone(), f)))));
        }
        StmtKind::While(c, b) => {
            out.extend(expr_mutants(c).into_iter().map(|(k, c)| (k, with(StmtKind::While(c, b.clone())))));
            out.extend(block_mutants(b).into_iter().map(|(k, b)| (k, with(StmtKind::While(c.clone(), b)))));
        }
        StmtKind::For(v, a, z, b) => {
            out.extend(expr_mutants(a).into_iter().map(|(k, a)| (k, with(StmtKind::For(v.clone(), a, z.clone(), b.clone())))));
            out.extend(expr_mutants(z).into_iter().map(|(k, z)| (k, with(StmtKind::For(v.clone(), a.clone(), z, b.clone())))));
            out.extend(block_mutants(b).into_iter().map(|(k, b)| (k, with(StmtKind::For(v.clone(), a.clone(), z.clone(), b)))));
        }
        StmtKind::Pass => {}
    }
    out
}

fn block_mutants(b: &[Stmt]) -> Vec<(&'static str, Vec<Stmt>)> {
    let mut out = Vec::new();
    for i in 0..b.len() {
        for (k, s) in stmt_mutants(&b[i]) {
            let mut v = b.to_vec();
            v[i] = s;
            out.push((k, v));
        }
        if matches!(b[i].kind, StmtKind::Assign(..)) && b.len() > 1 {
            let mut v = b.to_vec();
            v.remove(i);
            out.push(("deletion", v));
        }
        let returns = |s: &Stmt| matches!(s.kind, StmtKind::Return(_));
        if i + 1 < b.len() && !returns(&b[i]) && !returns(&b[i + 1]) {
            let mut v = b.to_vec();
            v.swap(i, i + 1);
            out.push(("swap", v));
        }
    }
    out
}

/// Every single mutation of `src`, as compiled programs with their kind.
pub fn mutants(src: &SourceUnit) -> Vec<(&'static str, SourceUnit, Program)> {
    let f: Function = parse(src).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (i, (kind, body)) in block_mutants(&f.body).into_iter().enumerate() {
        let text = print_function(&Function { body, ..f.clone() });
        if !seen.insert(text.clone()) {
            continue;
        }
        let unit = SourceUnit::new(format!("{}_m{i}", src.name), text);
        if let Ok(p) = compile(&unit) {
            out.push((kind, unit, p));
        }
    }
    out
}
pub mod suites;
