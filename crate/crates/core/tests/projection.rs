//! Projection coverage and misbehaving-program tests over the sample
//! corpus: every translation rule fires somewhere on the clean samples,
//! and each mutant trips exactly the check it was built to trip.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use chorcc_core::ast::Program;
use chorcc_core::chor_projection::project_chor;
use chorcc_core::ep_projection::{project_ep_all, EpError};
use chorcc_core::frontend::parse;
use chorcc_core::rules::{Rule, RuleTrace};
use chorcc_core::{
    drive, run_verification_ir, CheckClass, Mode, RunConfig, RunVerdict, Value,
};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn load(path: PathBuf) -> Program {
    let src = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    parse(&src).unwrap_or_else(|d| panic!("{path:?}: parse failed: {d:?}"))
}

fn clean_programs() -> Vec<(String, Program)> {
    let mut paths: Vec<_> = fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "chor"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name.clone(), load(p))
        })
        .collect()
}

fn mutant(name: &str) -> Program {
    load(corpus_dir().join("mutants").join(name))
}

fn params(n: i64) -> BTreeMap<String, Value> {
    BTreeMap::from([("n".to_string(), Value::int(n))])
}

#[test]
fn every_translation_rule_fires_on_the_samples() {
    let mut union = RuleTrace::new();
    for (name, program) in clean_programs() {
        let (_, chor_trace) =
            project_chor(&program).unwrap_or_else(|e| panic!("{name}: {e}"));
        union.absorb(&chor_trace);
        let (_, _, ep_trace) =
            project_ep_all(&program).unwrap_or_else(|e| panic!("{name}: {e}"));
        union.absorb(&ep_trace);
    }
    let missing = union.missing(Rule::ALL);
    assert!(missing.is_empty(), "rules never exercised: {missing:?}");
}

#[test]
fn constant_receiver_map_fails_the_injectivity_check() {
    let program = mutant("broadcast_const_d.chor");
    let (vp, _) = project_chor(&program).expect("projection itself succeeds");
    let out = run_verification_ir(&program, &vp, &params(3)).expect("run completes");
    let inj: Vec<_> = out
        .checks
        .iter()
        .filter(|c| c.class == CheckClass::Injectivity && !c.passed)
        .collect();
    assert_eq!(inj.len(), 1, "expected one failed receiver-map check: {:#?}", out.checks);
}

#[test]
fn constant_receiver_map_has_no_endpoint_projection() {
    let program = mutant("broadcast_const_d.chor");
    match project_ep_all(&program) {
        Err(EpError::NotInvertible { .. }) => {}
        other => panic!("expected a non-invertible receiver map, got {other:?}"),
    }
}

#[test]
fn foreign_write_is_reported_exactly_once() {
    let program = mutant("two_party_confine.chor");
    let (vp, _) = project_chor(&program).expect("projection succeeds");
    let out = run_verification_ir(&program, &vp, &BTreeMap::new()).expect("run completes");
    let confinement: Vec<_> = out
        .checks
        .iter()
        .filter(|c| c.class == CheckClass::Confinement && !c.passed)
        .collect();
    assert_eq!(confinement.len(), 1, "{:#?}", out.checks);
}

#[test]
fn clean_samples_have_no_confinement_failures() {
    for (name, program) in clean_programs() {
        let (vp, _) = project_chor(&program).unwrap_or_else(|e| panic!("{name}: {e}"));
        let p = program
            .choreography()
            .map(|c| !c.params.is_empty())
            .unwrap_or(false);
        let ps = if p { params(4) } else { BTreeMap::new() };
        let out = run_verification_ir(&program, &vp, &ps)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            out.checks
                .iter()
                .all(|c| c.class != CheckClass::Confinement || c.passed),
            "{name}: unexpected confinement failure"
        );
    }
}

#[test]
fn starved_receiver_deadlocks_exactly() {
    let program = mutant("diverge_deadlock.chor");
    let cfg = RunConfig::new(BTreeMap::new());
    let out = drive(&program, Mode::Endpoints, &cfg).expect("simulation runs");
    assert_eq!(out.verdict, RunVerdict::Deadlock);
    let report = &out.reports[0];
    let dl = report.deadlock.as_ref().expect("deadlock report");
    assert_eq!(dl.blocked, vec!["b".to_string()]);
    assert!(
        dl.waiting_on.iter().all(|w| w.starts_with("chan[")),
        "{:?}",
        dl.waiting_on
    );
}
