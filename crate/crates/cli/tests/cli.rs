//! End-to-end tests of the `chorcc` binary: exit codes, artifact files,
//! idempotence, config-file precedence, and schema-valid machine output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;

fn chorcc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chorcc"))
}

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn run_ok(args: &[&str]) -> Output {
    let out = chorcc().args(args).output().expect("spawn chorcc");
    assert!(
        out.status.success(),
        "chorcc {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

// ---------------------------------------------------------------------------
// a small JSON-Schema checker (the subset the shipped schema file uses:
// type, enum, required, properties, additionalProperties, items, $ref
// into #/definitions, oneOf)

fn type_matches(ty: &str, v: &Json) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "integer" => v.as_i64().is_some() || v.as_u64().is_some(),
        "number" => v.is_number(),
        other => panic!("schema names unknown type {other}"),
    }
}

fn validate(schema: &Json, root: &Json, v: &Json, path: &str, errors: &mut Vec<String>) {
    if let Some(r) = schema.get("$ref").and_then(Json::as_str) {
        let name = r.strip_prefix("#/definitions/").expect("local ref");
        let target = &root["definitions"][name];
        assert!(!target.is_null(), "dangling $ref {r}");
        validate(target, root, v, path, errors);
        return;
    }
    if let Some(branches) = schema.get("oneOf").and_then(Json::as_array) {
        let hits = branches
            .iter()
            .filter(|b| {
                let mut scratch = Vec::new();
                validate(b, root, v, path, &mut scratch);
                scratch.is_empty()
            })
            .count();
        if hits != 1 {
            errors.push(format!("{path}: {hits} of {} oneOf branches match", branches.len()));
        }
        return;
    }
    if let Some(ty) = schema.get("type") {
        let allowed: Vec<&str> = match ty {
            Json::String(s) => vec![s.as_str()],
            Json::Array(a) => a.iter().filter_map(Json::as_str).collect(),
            other => panic!("bad type keyword {other}"),
        };
        if !allowed.iter().any(|t| type_matches(t, v)) {
            errors.push(format!("{path}: expected {allowed:?}, got {v}"));
            return;
        }
    }
    if let Some(options) = schema.get("enum").and_then(Json::as_array) {
        if !options.contains(v) {
            errors.push(format!("{path}: {v} not in {options:?}"));
        }
    }
    if let Some(obj) = v.as_object() {
        if let Some(req) = schema.get("required").and_then(Json::as_array) {
            for key in req.iter().filter_map(Json::as_str) {
                if !obj.contains_key(key) {
                    errors.push(format!("{path}: missing required key `{key}`"));
                }
            }
        }
        let props = schema.get("properties").and_then(Json::as_object);
        for (key, value) in obj {
            let sub = props.and_then(|p| p.get(key));
            match sub {
                Some(s) => validate(s, root, value, &format!("{path}.{key}"), errors),
                None => match schema.get("additionalProperties") {
                    Some(Json::Bool(false)) => {
                        errors.push(format!("{path}: unexpected key `{key}`"))
                    }
                    Some(Json::Bool(true)) | None => {}
                    Some(s) => validate(s, root, value, &format!("{path}.{key}"), errors),
                },
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, item) in arr.iter().enumerate() {
            validate(items, root, item, &format!("{path}[{i}]"), errors);
        }
    }
}

fn assert_valid_report(doc: &str) {
    let schema_text = fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas/run-report.schema.json"),
    )
    .expect("schema file");
    let schema: Json = serde_json::from_str(&schema_text).expect("schema parses");
    let v: Json = serde_json::from_str(doc).expect("output parses");
    let mut errors = Vec::new();
    validate(&schema, &schema, &v, "$", &mut errors);
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

// ---------------------------------------------------------------------------
// run

#[test]
fn equiv_run_prints_equal_and_exits_zero() {
    let out = run_ok(&["run", corpus("ring.chor").to_str().unwrap(), "--params", "n=4"]);
    let text = stdout(&out);
    assert_eq!(text.lines().last(), Some("EQUAL"), "{text}");
}

#[test]
fn machine_output_validates_against_the_shipped_schema() {
    for (file, extra) in [
        ("two_party.chor", vec![]),
        ("ring.chor", vec!["--params", "n=3", "--schedule", "random", "--seeds", "2"]),
        ("mutants/diverge_deadlock.chor", vec!["--mode", "endpoints"]),
        ("mutants/broadcast_const_d.chor", vec!["--mode", "ir", "--params", "n=3"]),
    ] {
        let input = corpus(file);
        let mut args = vec!["run", input.to_str().unwrap(), "--json"];
        args.extend(extra);
        let out = chorcc().args(&args).output().expect("spawn");
        assert_valid_report(&String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn deadlocked_simulation_exits_two() {
    let out = chorcc()
        .args(["run", corpus("mutants/diverge_deadlock.chor").to_str().unwrap()])
        .args(["--mode", "endpoints"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(text.lines().last(), Some("DEADLOCK"));
}

#[test]
fn failed_checks_exit_one() {
    let out = chorcc()
        .args(["run", corpus("mutants/broadcast_const_d.chor").to_str().unwrap()])
        .args(["--mode", "ir", "--params", "n=3"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("chorcc.toml");
    fs::write(&cfg, "mode = \"ir\"\nseeds = 2\nschedule = \"random\"\n[params]\nn = 2\n").unwrap();

    // Config alone: ir mode at n=2.
    let out = run_ok(&[
        "run",
        corpus("ring.chor").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--json",
    ]);
    let doc: Json = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["reports"][0]["mode"], "ir");
    assert_eq!(doc["reports"][0]["params"]["n"], "2");

    // Flag overrides the parameter but keeps the configured mode.
    let out = run_ok(&[
        "run",
        corpus("ring.chor").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--params",
        "n=4",
        "--json",
    ]);
    let doc: Json = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["reports"][0]["mode"], "ir");
    assert_eq!(doc["reports"][0]["params"]["n"], "4");
}

// ---------------------------------------------------------------------------
// frontend subcommands

#[test]
fn missing_input_exits_three() {
    let out = chorcc().args(["parse", "missing.chor"]).output().expect("spawn");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_flags_exit_three() {
    let out = chorcc().args(["run", "--bogus"]).output().expect("spawn");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn parse_output_is_canonical() {
    let out = run_ok(&["parse", corpus("loop_sum.chor").to_str().unwrap()]);
    let text1 = stdout(&out);
    // Feeding the canonical text back yields the same text.
    let dir = tempfile::tempdir().unwrap();
    let reprint = dir.path().join("canon.chor");
    fs::write(&reprint, &text1).unwrap();
    let out = run_ok(&["parse", reprint.to_str().unwrap()]);
    assert_eq!(text1, stdout(&out));
}

#[test]
fn check_rejects_an_ill_formed_program() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.chor");
    fs::write(
        &bad,
        "class Cell { int x; constructor(int v) { this.x := v; } }\n\
         choreography T() { endpoint a = Nope(0); run { } }\n",
    )
    .unwrap();
    let out = chorcc().args(["check", bad.to_str().unwrap()]).output().expect("spawn");
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn check_accepts_every_sample() {
    for entry in fs::read_dir(corpus("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "chor") {
            run_ok(&["check", path.to_str().unwrap()]);
        }
    }
}

// ---------------------------------------------------------------------------
// projection subcommands

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn endpoint_projection_writes_the_expected_files_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ep");
    let input = corpus("ring.chor");
    let args = [
        "project-ep",
        "--all",
        input.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    run_ok(&args);
    let names: Vec<String> = dir_snapshot(&out_dir).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        ["F.ep", "F.ep.json", "G.ep", "G.ep.json", "channels.json"]
    );
    let first = dir_snapshot(&out_dir);
    run_ok(&args);
    assert_eq!(first, dir_snapshot(&out_dir), "outputs changed on re-run");
}

#[test]
fn single_sort_projection_writes_only_that_sort() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ep");
    run_ok(&[
        "project-ep",
        "--sort",
        "G",
        corpus("ring.chor").to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let names: Vec<String> = dir_snapshot(&out_dir).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["G.ep", "G.ep.json", "channels.json"]);
}

#[test]
fn non_invertible_receiver_map_is_rejected_at_projection_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = chorcc()
        .args([
            "project-ep",
            "--all",
            corpus("mutants/broadcast_const_d.chor").to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invert"), "{err}");
}

#[test]
fn verification_projection_writes_idempotent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("vir");
    let input = corpus("loop_sum.chor");
    let args = [
        "project-chor",
        input.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    run_ok(&args);
    let names: Vec<String> = dir_snapshot(&out_dir).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["LoopSum.vir", "LoopSum.vir.json"]);
    let first = dir_snapshot(&out_dir);
    run_ok(&args);
    assert_eq!(first, dir_snapshot(&out_dir));
}
