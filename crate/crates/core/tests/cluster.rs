mod common;

use std::collections::BTreeSet;

use common::{problem, program, source};
use progfix::cluster::{cluster, load_store, save_store, AddOutcome, ClusterError, Clustering};
use progfix::frontend::{compile, SourceUnit};

fn derivs(ids: &[&str]) -> Vec<(String, SourceUnit, progfix::model::Program)> {
    ids.iter().map(|id| (id.to_string(), source("derivatives", id), program("derivatives", id))).collect()
}

#[test]
fn derivative_attempts_form_two_clusters() {
    let pb = problem("derivatives");
    for id in ["C1", "C2", "C3"] {
        assert!(pb.is_correct(&program("derivatives", id)), "{id}");
    }
    for id in ["I1", "I2"] {
        assert!(!pb.is_correct(&program("derivatives", id)), "{id}");
    }
    let c = cluster(derivs(&["C1", "C2", "C3"]), &pb.inputs, pb.step_limit()).unwrap();
    assert_eq!(c.order, vec!["C1", "C3"]);
    assert_eq!(c.clusters["C1"], BTreeSet::from(["C1".to_string(), "C2".to_string()]));
    assert_eq!(c.clusters["C3"], BTreeSet::from(["C3".to_string()]));
    c.audit(&pb.inputs, pb.step_limit()).unwrap();
}

#[test]
fn later_smaller_attempt_demotes_the_representative() {
    let pb = problem("derivatives");
    let c = cluster(derivs(&["C2", "C1", "C3"]), &pb.inputs, pb.step_limit()).unwrap();
    assert_eq!(c.clusters.len(), 2);
    assert!(c.clusters["C1"].contains("C2"));
    c.audit(&pb.inputs, pb.step_limit()).unwrap();

    let mut c = cluster(derivs(&["C2"]), &pb.inputs, pb.step_limit()).unwrap();
    let out = c.add_attempt("C1", source("derivatives", "C1"), program("derivatives", "C1"), &pb.inputs, pb.step_limit());
    assert_eq!(out.unwrap(), AddOutcome::Promoted { demoted: vec!["C2".into()] });
}

#[test]
fn singleton_and_joining() {
    let pb = problem("derivatives");
    let mut c = cluster(derivs(&["C1"]), &pb.inputs, pb.step_limit()).unwrap();
    assert_eq!(c.clusters["C1"].len(), 1);
    let out = c.add_attempt("C2", source("derivatives", "C2"), program("derivatives", "C2"), &pb.inputs, pb.step_limit());
    assert_eq!(out.unwrap(), AddOutcome::Joined { rep: "C1".into() });
    let out = c.add_attempt("C3", source("derivatives", "C3"), program("derivatives", "C3"), &pb.inputs, pb.step_limit());
    assert_eq!(out.unwrap(), AddOutcome::NewCluster);
}

#[test]
fn failing_attempts_are_rejected() {
    let pb = problem("derivatives");
    let err = cluster(derivs(&["C1", "I1"]), &pb.inputs, pb.step_limit()).unwrap_err();
    assert!(matches!(err, ClusterError::NotCorrect { ref id } if id == "I1"), "{err}");
}

#[test]
fn store_round_trip() {
    let pb = problem("derivatives");
    let c = cluster(derivs(&["C1", "C2", "C3"]), &pb.inputs, pb.step_limit()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_store(&c, dir.path()).unwrap();
    assert_eq!(load_store(dir.path()).unwrap(), c);
    assert_eq!(load_store(tempfile::tempdir().unwrap().path()).unwrap(), Clustering::new());

    let bad = dir.path().join("clusters/C1/members/C2.mini");
    std::fs::write(&bad, "def broken(:\n").unwrap();
    match load_store(dir.path()).unwrap_err() {
        ClusterError::Schema { path, .. } => assert_eq!(path, bad),
        other => panic!("{other}"),
    }
}

#[test]
fn version_mismatch_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("clusters")).unwrap();
    std::fs::write(dir.path().join("clusters/store.json"), r#"{"version": 9, "order": []}"#).unwrap();
    assert!(matches!(load_store(dir.path()), Err(ClusterError::Schema { .. })));
}

#[test]
fn representative_never_has_more_variables() {
    let pb = problem("derivatives");
    let c = cluster(derivs(&["C2", "C3", "C1"]), &pb.inputs, pb.step_limit()).unwrap();
    for (rep, members) in &c.clusters {
        for m in members {
            assert!(c.programs[rep].program.vars.len() <= c.programs[m].program.vars.len());
        }
    }
    let novel = compile(&SourceUnit::new("N", "def computeDeriv(poly):\n    return [0.0]\n")).unwrap();
    assert!(!pb.is_correct(&novel));
}

#[test]
fn clustering_invariants_hold_under_shuffles() {
    println!("{}", common::suites::clustering_invariants(10).unwrap_or_else(|e| panic!("{e}")));
}
