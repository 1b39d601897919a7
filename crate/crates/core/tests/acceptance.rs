//! Prints one pass/fail line per acceptance criterion. Runs without the
//! libtest harness so the lines are never captured.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::suites::{self, Outcome};

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("golden derivative suite", suites::golden),
        ("soundness of repairs on mutants", suites::soundness),
        ("ILP oracle", || suites::ilp_oracle(100, 2024)),
        ("tree-edit oracle", suites::tree_edit_oracle),
        ("clustering invariants", || suites::clustering_invariants(10)),
        ("order-conflict regression", suites::order_conflict),
        ("complicated-repair capability", suites::complicated_repairs),
        ("timeout behavior", suites::timeout_behavior),
    ];
    let total = criteria.len();
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match &outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                println!("FAIL  {name} ({secs:.1}s): {why}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {total} criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
