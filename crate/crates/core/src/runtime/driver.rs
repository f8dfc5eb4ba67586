//! Mode dispatch: run a program under any execution mode and produce
//! uniform [`RunReport`]s.
//!
//! * `chor` — the global-view reference interpreter.
//! * `ir` — the instrumented sequential program under full checking.
//! * `endpoints` — the projected endpoint programs, concurrently.
//! * `equiv` — all of the above; every endpoint run's merged heap and the
//!   checking run's heap are compared against the reference heap.

use super::chor_run::run_choreography;
use super::heap::Heap;
use super::ir_run::run_verification_ir;
use super::report::{
    compare_heaps, heap_snapshot, merge_and_compare, CheckClass, CheckRecord, MergeVerdict,
    RunReport, RunVerdict,
};
use super::sim::{run_endpoints, Schedule};
use super::value::{Fatal, Value};
use crate::ast::Program;
use crate::chor_projection::{project_chor, ProjectError};
use crate::ep_projection::{project_ep_all, EpError};
use std::collections::BTreeMap;
use thiserror::Error;

/// Execution mode of a `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Chor,
    Ir,
    Endpoints,
    Equiv,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Chor => "chor",
            Mode::Ir => "ir",
            Mode::Endpoints => "endpoints",
            Mode::Equiv => "equiv",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "chor" => Ok(Mode::Chor),
            "ir" => Ok(Mode::Ir),
            "endpoints" => Ok(Mode::Endpoints),
            "equiv" => Ok(Mode::Equiv),
            other => Err(format!(
                "unknown mode `{other}` (expected chor, ir, endpoints, or equiv)"
            )),
        }
    }
}

/// What to run and how to schedule the endpoint tasks.
pub struct RunConfig {
    pub params: BTreeMap<String, Value>,
    /// Concrete schedules for the endpoint runs; one simulation per entry.
    pub schedules: Vec<Schedule>,
}

impl RunConfig {
    pub fn new(params: BTreeMap<String, Value>) -> RunConfig {
        RunConfig { params, schedules: vec![Schedule::RoundRobin] }
    }
}

/// Projection failures surface before any run starts.
#[derive(Debug, Error)]
pub enum DriveError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Ep(#[from] EpError),
}

/// All reports produced by one `drive`, plus the worst verdict among them.
pub struct DriveOutcome {
    pub reports: Vec<RunReport>,
    pub verdict: RunVerdict,
}

fn severity(v: RunVerdict) -> u8 {
    match v {
        RunVerdict::Pass => 0,
        RunVerdict::CheckFail => 1,
        RunVerdict::Deadlock => 2,
    }
}

fn overall(reports: &[RunReport]) -> RunVerdict {
    reports
        .iter()
        .map(|r| r.verdict)
        .max_by_key(|v| severity(*v))
        .unwrap_or(RunVerdict::Pass)
}

fn param_strings(params: &BTreeMap<String, Value>) -> BTreeMap<String, String> {
    params.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
}

/// Run `program` under `mode` and report.
pub fn drive(program: &Program, mode: Mode, cfg: &RunConfig) -> Result<DriveOutcome, DriveError> {
    let mut reports = Vec::new();
    match mode {
        Mode::Chor => reports.push(run_chor_report(program, cfg, None)),
        Mode::Ir => reports.push(run_ir_report(program, cfg, None)?),
        Mode::Endpoints => run_endpoint_reports(program, cfg, None, &mut reports)?,
        Mode::Equiv => {
            let reference = match run_choreography(program, &cfg.params) {
                Ok(out) => Some(out.heap),
                Err(_) => None,
            };
            reports.push(run_chor_report(program, cfg, None));
            reports.push(run_ir_report(program, cfg, reference.as_ref())?);
            run_endpoint_reports(program, cfg, reference.as_ref(), &mut reports)?;
        }
    }
    let verdict = overall(&reports);
    Ok(DriveOutcome { reports, verdict })
}

fn base_report(program: &Program, mode: &str, cfg: &RunConfig) -> RunReport {
    RunReport {
        program: program
            .choreography()
            .map(|c| c.name.clone())
            .unwrap_or_else(|| "<none>".to_string()),
        mode: mode.to_string(),
        params: param_strings(&cfg.params),
        verdict: RunVerdict::Pass,
        failures: 0,
        checks: Vec::new(),
        conservation_audits: 0,
        seed: None,
        schedule: None,
        deadlock: None,
        comparison: None,
        final_heap: serde_json::Value::Null,
    }
}

fn fatal_record(err: &Fatal) -> CheckRecord {
    CheckRecord {
        seq: 0,
        class: CheckClass::Fatal,
        label: "fatal".to_string(),
        passed: false,
        detail: err.msg.clone(),
        site: None,
    }
}

fn run_chor_report(program: &Program, cfg: &RunConfig, reference: Option<&Heap>) -> RunReport {
    let mut report = base_report(program, "chor", cfg);
    match run_choreography(program, &cfg.params) {
        Ok(out) => {
            report.comparison = reference.map(|r| compare_heaps(&out.heap, r));
            let (verdict, failures) =
                RunReport::conclude(&out.checks, &None, &report.comparison);
            report.verdict = verdict;
            report.failures = failures;
            report.checks = out.checks;
            report.final_heap = heap_snapshot(&out.heap);
        }
        Err(f) => {
            report.checks = vec![fatal_record(&f)];
            report.verdict = RunVerdict::CheckFail;
            report.failures = 1;
        }
    }
    report
}

fn run_ir_report(
    program: &Program,
    cfg: &RunConfig,
    reference: Option<&Heap>,
) -> Result<RunReport, DriveError> {
    let (v, _trace) = project_chor(program)?;
    let mut report = base_report(program, "ir", cfg);
    match run_verification_ir(program, &v, &cfg.params) {
        Ok(out) => {
            report.comparison = reference.map(|r| compare_heaps(&out.heap, r));
            let (verdict, failures) =
                RunReport::conclude(&out.checks, &None, &report.comparison);
            report.verdict = verdict;
            report.failures = failures;
            report.checks = out.checks;
            report.conservation_audits = out.conservation_audits;
            report.final_heap = heap_snapshot(&out.heap);
        }
        Err(f) => {
            report.checks = vec![fatal_record(&f)];
            report.verdict = RunVerdict::CheckFail;
            report.failures = 1;
        }
    }
    Ok(report)
}

fn run_endpoint_reports(
    program: &Program,
    cfg: &RunConfig,
    reference: Option<&Heap>,
    reports: &mut Vec<RunReport>,
) -> Result<(), DriveError> {
    let (eps, _table, _trace) = project_ep_all(program)?;
    for schedule in &cfg.schedules {
        let mut report = base_report(program, "endpoints", cfg);
        report.schedule = Some(schedule.name().to_string());
        report.seed = schedule.seed();
        match run_endpoints(program, &eps, &cfg.params, *schedule) {
            Ok(out) => {
                let (merged, merge_verdict) = match reference {
                    Some(r) => merge_and_compare(&out.fragments, r),
                    None => {
                        // No reference: still merge, to exercise the
                        // partition; compare against the live heap, which
                        // the fragments were split from.
                        let (m, v) = merge_and_compare(&out.fragments, &out.heap);
                        debug_assert!(v.is_equal(), "fragment partition lost objects");
                        (m, v)
                    }
                };
                report.comparison =
                    reference.map(|_| merge_verdict.clone()).or(match &merge_verdict {
                        MergeVerdict::Overlap { .. } => Some(merge_verdict.clone()),
                        _ => None,
                    });
                let (verdict, failures) =
                    RunReport::conclude(&out.checks, &out.deadlock, &report.comparison);
                report.verdict = verdict;
                report.failures = failures;
                report.checks = out.checks;
                report.deadlock = out.deadlock;
                report.final_heap = heap_snapshot(&merged);
            }
            Err(f) => {
                report.checks = vec![fatal_record(&f)];
                report.verdict = RunVerdict::CheckFail;
                report.failures = 1;
            }
        }
        reports.push(report);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    const HEADER: &str = r#"
class Cell {
  int x;
  int y;

  constructor(int v) {
    this.x := v;
  }
}
"#;

    fn params(kv: &[(&str, i64)]) -> BTreeMap<String, Value> {
        kv.iter().map(|(k, v)| (k.to_string(), Value::int(*v))).collect()
    }

    #[test]
    fn equiv_mode_compares_every_run_against_the_reference() {
        let src = format!(
            r#"{HEADER}
choreography Ring(int n) {{
  endpoint F[i := 0 .. n] = Cell(i);
  endpoint G[i := 0 .. n] = Cell(0);
  run {{
    communicate F[i := 0 .. n - 1]: F[i].x -> G[i + 1]: G[i + 1].y;
    communicate F[n - 1]: F[n - 1].x -> G[0]: G[0].y;
  }}
}}
"#
        );
        let p = parse(&src).unwrap();
        let mut cfg = RunConfig::new(params(&[("n", 4)]));
        cfg.schedules = vec![Schedule::RoundRobin, Schedule::Random(7)];
        let out = drive(&p, Mode::Equiv, &cfg).unwrap();
        assert_eq!(out.verdict, RunVerdict::Pass);
        // chor + ir + two endpoint runs.
        assert_eq!(out.reports.len(), 4);
        for r in &out.reports[1..] {
            assert!(r.comparison.as_ref().unwrap().is_equal(), "{}: {:?}", r.mode, r.comparison);
        }
        assert_eq!(out.reports[3].seed, Some(7));
    }

    #[test]
    fn endpoint_deadlock_dominates_the_verdict() {
        let src = format!(
            r#"{HEADER}
choreography Stuck() {{
  endpoint a = Cell(0);
  endpoint b = Cell(0);
  run {{
    loop_invariant true;
    while ((\endpoint a; a.x < 0)) {{
      communicate a: a.x -> b: b.y;
    }}
  }}
}}
"#
        );
        let p = parse(&src).unwrap();
        let out = drive(&p, Mode::Endpoints, &RunConfig::new(params(&[]))).unwrap();
        assert_eq!(out.verdict, RunVerdict::Deadlock);
        assert_eq!(out.verdict.exit_code(), 2);
        assert!(out.reports[0].deadlock.is_some());
    }

    #[test]
    fn fatal_runtime_errors_become_failing_reports() {
        // F[5] is out of range for n = 2: a type-level fault, reported as a
        // failed run rather than a panic.
        let src = format!(
            r#"{HEADER}
choreography Oops(int n) {{
  endpoint F[i := 0 .. n] = Cell(i);
  run {{
    endpoint F[5]: F[5].x := 1;
  }}
}}
"#
        );
        let p = parse(&src).unwrap();
        let out = drive(&p, Mode::Chor, &RunConfig::new(params(&[("n", 2)]))).unwrap();
        assert_eq!(out.verdict, RunVerdict::CheckFail);
        assert_eq!(out.reports[0].checks[0].class, CheckClass::Fatal);
    }
}
