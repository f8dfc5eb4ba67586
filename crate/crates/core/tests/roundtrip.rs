//! Source and JSON round-trips over the whole sample corpus (clean
//! programs and mutants alike): pretty-printing reaches a fixpoint after
//! one pass, and the JSON envelope preserves the tree exactly.

use std::fs;
use std::path::PathBuf;

use chorcc_core::ast::Program;
use chorcc_core::frontend::json::{from_json, to_json};
use chorcc_core::frontend::parse;
use chorcc_core::frontend::pretty::pretty;

fn all_corpus_files() -> Vec<(String, String)> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut paths: Vec<_> = fs::read_dir(&root)
        .expect("corpus directory")
        .chain(fs::read_dir(root.join("mutants")).expect("mutants directory"))
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "chor"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let src = fs::read_to_string(&p).expect("read");
            (name, src)
        })
        .collect()
}

fn parse_named(name: &str, src: &str) -> Program {
    parse(src).unwrap_or_else(|d| panic!("{name}: parse failed: {d:?}"))
}

#[test]
fn pretty_printing_reaches_a_fixpoint() {
    for (name, src) in all_corpus_files() {
        let p1 = parse_named(&name, &src);
        let text1 = pretty(&p1);
        let p2 = parse_named(&name, &text1);
        let text2 = pretty(&p2);
        assert_eq!(p1, p2, "{name}: reparse changed the tree");
        assert_eq!(text1, text2, "{name}: second print differs");
    }
}

#[test]
fn json_envelope_preserves_the_tree() {
    for (name, src) in all_corpus_files() {
        let p1 = parse_named(&name, &src);
        let text = to_json(&p1);
        let p2 = from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(p1, p2, "{name}: JSON round-trip changed the tree");
        assert_eq!(text, to_json(&p2), "{name}: JSON is not canonical");
    }
}
