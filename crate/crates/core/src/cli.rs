//! Command-line front end: build cluster stores, repair single attempts,
//! produce corpus statistics and run the HTTP service.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cluster::{cluster, load_store, save_store, ClusterError, Clustering};
use crate::feedback::render;
use crate::frontend::{compile, FrontendError, SourceUnit};
use crate::model::Program;
use crate::problem::{Problem, ProblemError};
use crate::repair::{repair_best, Complexity, RepairError, RepairOptions, RepairResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NO_STRUCTURE: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const EXIT_PARSE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "progfix", version, about = "Cluster correct attempts and repair incorrect ones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster the correct attempts of a problem and write its store.
    Cluster {
        problem_dir: PathBuf,
        /// Defaults to `<problem_dir>/attempts`.
        attempts_dir: Option<PathBuf>,
    },
    /// Repair one attempt against the stored cluster representatives.
    Repair {
        problem_dir: PathBuf,
        attempt_file: PathBuf,
        /// Time budget in seconds.
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        /// Print the structured repair record instead of a report.
        #[arg(long)]
        json: bool,
    },
    /// Repair every attempt of a corpus and print a statistics row.
    Eval {
        problem_dir: PathBuf,
        /// Defaults to `<problem_dir>/attempts`.
        attempts_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        /// Number of attempts repaired concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Serve the HTTP API over a directory of problem directories.
    Serve {
        problems_root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        /// Directory for attempt logs; defaults to each problem directory.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Allowed CORS origin; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Store(#[from] ClusterError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

/// One attempt file, parsed or not.
pub struct Attempt {
    pub id: String,
    pub path: PathBuf,
    pub parsed: Result<(SourceUnit, Program), FrontendError>,
}

/// Reads `dir/*.mini` sorted by file name.
pub fn load_attempts(dir: &Path) -> Result<Vec<Attempt>, CliError> {
    let io = |source| CliError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "mini"));
    paths.sort();
    paths.into_iter().map(|p| read_attempt(&p)).collect()
}

pub fn read_attempt(path: &Path) -> Result<Attempt, CliError> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("attempt").to_string();
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let unit = SourceUnit::new(id.clone(), text);
    let parsed = compile(&unit).map(|p| (unit, p));
    Ok(Attempt { id, path: path.to_path_buf(), parsed })
}

fn default_attempts(problem_dir: &Path, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| problem_dir.join("attempts"))
}

fn seconds(t: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(t).map_err(|_| CliError::Usage(format!("invalid timeout {t}")))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClusterSummary {
    pub n: usize,
    pub nc: usize,
    pub s: usize,
    /// Representative to members, in store order.
    pub clusters: Vec<(String, Vec<String>)>,
    pub warnings: Vec<String>,
}

/// Filters attempts by expected outputs, clusters the correct ones in
/// file-name order and writes the store.
pub fn cmd_cluster(problem_dir: &Path, attempts_dir: &Path) -> Result<ClusterSummary, CliError> {
    let problem = Problem::load(problem_dir)?;
    let attempts = load_attempts(attempts_dir)?;
    let n = attempts.len();
    let mut warnings = Vec::new();
    let mut correct = Vec::new();
    for a in attempts {
        match a.parsed {
            Ok((unit, prog)) if problem.is_correct(&prog) => correct.push((a.id, unit, prog)),
            Ok(_) => {}
            Err(e) => warnings.push(format!("{}: {e}", a.path.display())),
        }
    }
    let nc = correct.len();
    let c = cluster(correct, &problem.inputs, problem.step_limit())?;
    save_store(&c, problem_dir)?;
    let clusters = c.order.iter().map(|r| (r.clone(), c.clusters[r].iter().cloned().collect())).collect();
    Ok(ClusterSummary { n, nc, s: c.order.len(), clusters, warnings })
}

fn load_specs(problem_dir: &Path) -> Result<(Problem, Clustering), CliError> {
    let problem = Problem::load(problem_dir)?;
    let store = load_store(problem_dir)?;
    if store.order.is_empty() {
        return Err(CliError::Usage(format!("{}: no cluster store; run the cluster command first", problem_dir.display())));
    }
    Ok((problem, store))
}

fn spec_programs(store: &Clustering) -> Vec<Program> {
    store.representatives().map(|(_, e)| e.program.clone()).collect()
}

pub fn exit_code(e: &RepairError) -> i32 {
    match e {
        RepairError::NoStructure => EXIT_NO_STRUCTURE,
        RepairError::Timeout => EXIT_TIMEOUT,
        _ => EXIT_FAILURE,
    }
}

/// Repairs one attempt; writes the report to `out` and returns the exit
/// code.
pub fn cmd_repair(problem_dir: &Path, attempt_file: &Path, timeout: Duration, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let (problem, store) = load_specs(problem_dir)?;
    let attempt = read_attempt(attempt_file)?;
    let (_, imp) = match attempt.parsed {
        Ok(x) => x,
        Err(e) => {
            if json {
                writeln!(out, "{}", serde_json::json!({ "error": e })).ok();
            } else {
                writeln!(out, "{}: {e}", attempt_file.display()).ok();
            }
            return Ok(EXIT_PARSE);
        }
    };
    let opts = RepairOptions { budget: timeout, step_limit: problem.step_limit() };
    let start = Instant::now();
    let result = repair_best(&spec_programs(&store), &imp, &problem.inputs, &opts);
    let elapsed = start.elapsed();
    match result {
        Ok(r) => {
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&r).expect("result serializes")).ok();
            } else {
                write_report(out, &r, &imp, &problem, elapsed);
            }
            Ok(EXIT_OK)
        }
        Err(e) => {
            if json {
                writeln!(out, "{}", serde_json::json!({ "error": e })).ok();
            } else {
                writeln!(out, "no repair: {e}").ok();
                writeln!(out, "time: {:.2}s", elapsed.as_secs_f64()).ok();
            }
            Ok(exit_code(&e))
        }
    }
}

fn write_report(out: &mut dyn Write, r: &RepairResult, imp: &Program, problem: &Problem, elapsed: Duration) {
    let _ = writeln!(out, "spec: {}", r.spec_id);
    let _ = writeln!(out, "total cost: {}", r.total_cost);
    let _ = writeln!(out, "modifications: {}", r.mods.len());
    for m in &r.mods {
        let new = m.new_text.as_deref().unwrap_or("(deleted)");
        let _ = writeln!(out, "  line {}: {}: {} -> {} (cost {})", m.line, m.impl_var, m.old_text, new, m.cost);
    }
    let _ = writeln!(out, "feedback:");
    for line in render(Some(r), imp, &problem.config).to_text().lines() {
        let _ = writeln!(out, "  {line}");
    }
    let _ = writeln!(out, "time: {:.2}s", elapsed.as_secs_f64());
}

/// Per-attempt outcome of a corpus evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct AttemptReport {
    pub id: String,
    pub outcome: String,
    pub cost: Option<usize>,
    pub complexity: Option<Complexity>,
    pub complicated: bool,
    pub seconds: f64,
}

/// One statistics row: attempts, correct, clusters, incorrect, repaired,
/// complicated repairs, average and median repair time in seconds.
#[derive(Clone, Debug, Serialize)]
pub struct EvalRow {
    pub problem: String,
    pub n: usize,
    pub nc: usize,
    pub s: usize,
    pub ni: usize,
    pub r: usize,
    pub rc: usize,
    pub ta: f64,
    pub tm: f64,
    pub attempts: Vec<AttemptReport>,
}

impl EvalRow {
    pub fn header() -> String {
        format!("{:<16} {:>5} {:>5} {:>4} {:>5} {:>5} {:>4} {:>7} {:>7}", "problem", "N", "NC", "S", "NI", "R", "RC", "TA", "TM")
    }

    pub fn row(&self) -> String {
        format!(
            "{:<16} {:>5} {:>5} {:>4} {:>5} {:>5} {:>4} {:>7.2} {:>7.2}",
            self.problem, self.n, self.nc, self.s, self.ni, self.r, self.rc, self.ta, self.tm
        )
    }
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[k]
    } else {
        (xs[k - 1] + xs[k]) / 2.0
    }
}

/// Repairs every incorrect attempt against the stored representatives.
pub fn cmd_eval(problem_dir: &Path, attempts_dir: &Path, timeout: Duration, jobs: usize) -> Result<EvalRow, CliError> {
    let (problem, store) = load_specs(problem_dir)?;
    let attempts = load_attempts(attempts_dir)?;
    let specs = spec_programs(&store);
    let opts = RepairOptions { budget: timeout, step_limit: problem.step_limit() };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let reports: Vec<AttemptReport> = pool.install(|| {
        attempts
            .par_iter()
            .map(|a| {
                let prog = match &a.parsed {
                    Ok((_, p)) => p,
                    Err(e) => {
                        return AttemptReport { id: a.id.clone(), outcome: format!("parse error: {e}"), cost: None, complexity: None, complicated: false, seconds: 0.0 }
                    }
                };
                if problem.is_correct(prog) {
                    return AttemptReport { id: a.id.clone(), outcome: "correct".into(), cost: None, complexity: None, complicated: false, seconds: 0.0 };
                }
                let start = Instant::now();
                let r = repair_best(&specs, prog, &problem.inputs, &opts);
                let seconds = start.elapsed().as_secs_f64();
                match r {
                    Ok(r) => AttemptReport {
                        id: a.id.clone(),
                        outcome: "repaired".into(),
                        cost: Some(r.total_cost),
                        complexity: Some(r.complexity),
                        complicated: r.complexity.is_complicated(),
                        seconds,
                    },
                    Err(e) => AttemptReport { id: a.id.clone(), outcome: e.to_string(), cost: None, complexity: None, complicated: false, seconds },
                }
            })
            .collect()
    });
    let nc = reports.iter().filter(|r| r.outcome == "correct").count();
    let repaired: Vec<&AttemptReport> = reports.iter().filter(|r| r.cost.is_some()).collect();
    let mut times: Vec<f64> = reports.iter().filter(|r| r.outcome != "correct" && !r.outcome.starts_with("parse")).map(|r| r.seconds).collect();
    let ta = if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 };
    let tm = median(&mut times);
    Ok(EvalRow {
        problem: problem.id.clone(),
        n: reports.len(),
        nc,
        s: store.order.len(),
        ni: reports.len() - nc,
        r: repaired.len(),
        rc: repaired.iter().filter(|r| r.complicated).count(),
        ta,
        tm,
        attempts: reports,
    })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Cluster { problem_dir, attempts_dir } => {
            let dir = default_attempts(&problem_dir, attempts_dir);
            let s = cmd_cluster(&problem_dir, &dir)?;
            for w in &s.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            for (rep, members) in &s.clusters {
                let _ = writeln!(out, "cluster {rep}: {}", members.join(" "));
            }
            let _ = writeln!(out, "N={} NC={} S={}", s.n, s.nc, s.s);
            Ok(EXIT_OK)
        }
        Command::Repair { problem_dir, attempt_file, timeout, json } => {
            cmd_repair(&problem_dir, &attempt_file, seconds(timeout)?, json, out)
        }
        Command::Eval { problem_dir, attempts_dir, timeout, jobs } => {
            let dir = default_attempts(&problem_dir, attempts_dir);
            let row = cmd_eval(&problem_dir, &dir, seconds(timeout)?, jobs)?;
            for a in &row.attempts {
                let cost = a.cost.map(|c| format!(" cost {c}")).unwrap_or_default();
                let _ = writeln!(out, "{}: {}{cost} ({:.2}s)", a.id, a.outcome, a.seconds);
            }
            let _ = writeln!(out, "{}", EvalRow::header());
            let _ = writeln!(out, "{}", row.row());
            Ok(EXIT_OK)
        }
        Command::Serve { problems_root, addr, timeout, log_dir, cors_origin } => {
            let config = crate::service::ServiceConfig { problems_root, timeout: seconds(timeout)?, log_dir, cors_origin };
            let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: PathBuf::from("."), source })?;
            rt.block_on(crate::service::serve(config, addr)).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(EXIT_OK)
        }
    }
}
