//! Cross-mode agreement over the sample programs: for every program and
//! every small parameter value, the checking interpreter and the merged
//! endpoint heaps must reproduce the reference heap, with no failing
//! checks and no deadlock, under several schedules.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use chorcc_core::ast::Program;
use chorcc_core::frontend::parse;
use chorcc_core::{drive, Mode, RunConfig, RunVerdict, Schedule, Value};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn clean_programs() -> Vec<(String, Program)> {
    let mut out = Vec::new();
    let mut paths: Vec<_> = fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "chor"))
        .collect();
    paths.sort();
    for p in paths {
        let name = p.file_stem().unwrap().to_string_lossy().into_owned();
        let src = fs::read_to_string(&p).expect("read program");
        let program = parse(&src).unwrap_or_else(|d| panic!("{name}: parse failed: {d:?}"));
        out.push((name, program));
    }
    out
}

fn param_sets(program: &Program) -> Vec<BTreeMap<String, Value>> {
    let chor = program.choreography().expect("one choreography");
    if chor.params.is_empty() {
        return vec![BTreeMap::new()];
    }
    (0..=8)
        .map(|n| {
            chor.params
                .iter()
                .map(|p| (p.name.clone(), Value::int(n)))
                .collect()
        })
        .collect()
}

#[test]
fn every_sample_agrees_across_modes_and_parameters() {
    let programs = clean_programs();
    assert!(programs.len() >= 6, "expected at least 6 sample programs");
    for (name, program) in &programs {
        for params in param_sets(program) {
            let mut cfg = RunConfig::new(params.clone());
            cfg.schedules = vec![Schedule::RoundRobin, Schedule::Random(11), Schedule::Random(97)];
            let out = drive(program, Mode::Equiv, &cfg)
                .unwrap_or_else(|e| panic!("{name} {params:?}: drive failed: {e}"));
            let failing: Vec<_> = out
                .reports
                .iter()
                .flat_map(|r| r.checks.iter().filter(|c| !c.passed))
                .collect();
            assert_eq!(
                out.verdict,
                RunVerdict::Pass,
                "{name} {params:?}: {failing:#?}"
            );
            for report in &out.reports {
                assert!(report.deadlock.is_none(), "{name} {params:?}: deadlock");
            }
        }
    }
}
