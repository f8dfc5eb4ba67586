//! Shared fixtures for the criterion benchmarks in `benches/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use chorcc_core::{Program, Value};

/// Absolute path of the sample directory at the workspace root.
pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Raw source text of one sample, by file stem.
pub fn corpus_source(name: &str) -> String {
    let path = corpus_dir().join(format!("{name}.chor"));
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"))
}

/// Parsed program for one sample, by file stem.
pub fn corpus_program(name: &str) -> Program {
    chorcc_core::frontend::parse(&corpus_source(name))
        .unwrap_or_else(|d| panic!("{name}: {d:?}"))
}

/// Bind every declared parameter of the program to `n`.
pub fn params_n(program: &Program, n: i64) -> BTreeMap<String, Value> {
    program
        .choreography()
        .expect("one choreography")
        .params
        .iter()
        .map(|p| (p.name.clone(), Value::int(n)))
        .collect()
}
