//! Run reports: check records, verdicts, heap snapshots, and the merge/
//! compare oracle used to confront an endpoint run with the global-view run.

use super::heap::Heap;
use super::value::Value;
use crate::vir::CheckKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// What kind of check produced a record. The first eight mirror the assert
/// tags of the verification program; the rest are runtime-originated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckClass {
    Plain,
    Unanimity,
    Injectivity,
    LoopInvariant,
    ParPre,
    ParPost,
    ContractPre,
    ContractPost,
    /// An exhale could not be covered by the debited holdings.
    Permission,
    /// An inhale could not be sourced from in-flight permissions or unheld
    /// capacity (permission forgery).
    ChannelInhale,
    /// A confined region touched memory owned by a different instance.
    Confinement,
    /// Two `par` iterations had conflicting footprints.
    ParDisjointness,
    /// A conservation audit found a location whose total left 1.
    Conservation,
    /// An endpoint task died (foreign memory access or a local fault).
    Task,
    /// A fatal runtime error (type confusion etc.) ended the run early.
    Fatal,
}

impl From<CheckKind> for CheckClass {
    fn from(k: CheckKind) -> CheckClass {
        match k {
            CheckKind::Plain => CheckClass::Plain,
            CheckKind::Unanimity => CheckClass::Unanimity,
            CheckKind::Injectivity => CheckClass::Injectivity,
            CheckKind::LoopInvariant => CheckClass::LoopInvariant,
            CheckKind::ParPre => CheckClass::ParPre,
            CheckKind::ParPost => CheckClass::ParPost,
            CheckKind::ContractPre => CheckClass::ContractPre,
            CheckKind::ContractPost => CheckClass::ContractPost,
        }
    }
}

impl fmt::Display for CheckClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CheckClass::Plain => "plain",
            CheckClass::Unanimity => "unanimity",
            CheckClass::Injectivity => "injectivity",
            CheckClass::LoopInvariant => "loop-invariant",
            CheckClass::ParPre => "par-pre",
            CheckClass::ParPost => "par-post",
            CheckClass::ContractPre => "contract-pre",
            CheckClass::ContractPost => "contract-post",
            CheckClass::Permission => "permission",
            CheckClass::ChannelInhale => "channel-inhale",
            CheckClass::Confinement => "confinement",
            CheckClass::ParDisjointness => "par-disjointness",
            CheckClass::Conservation => "conservation",
            CheckClass::Task => "task",
            CheckClass::Fatal => "fatal",
        };
        f.write_str(name)
    }
}

/// One dynamically discharged check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRecord {
    /// Monotonic sequence number within the run.
    pub seq: usize,
    pub class: CheckClass,
    /// Where the check came from ("if-condition", "receiver-map", …).
    pub label: String,
    pub passed: bool,
    /// Human-readable failure description; empty when passed.
    pub detail: String,
    /// Communication site, for channel-related checks.
    pub site: Option<usize>,
}

/// Overall outcome of a run; drives the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunVerdict {
    Pass,
    CheckFail,
    Deadlock,
}

impl RunVerdict {
    pub fn exit_code(self) -> i32 {
        match self {
            RunVerdict::Pass => 0,
            RunVerdict::CheckFail => 1,
            RunVerdict::Deadlock => 2,
        }
    }
}

impl fmt::Display for RunVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunVerdict::Pass => "PASS",
            RunVerdict::CheckFail => "FAIL",
            RunVerdict::Deadlock => "DEADLOCK",
        })
    }
}

/// All unfinished tasks are blocked on a receive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockReport {
    /// Display names of the blocked instances, sorted.
    pub blocked: Vec<String>,
    /// The channel key each one is waiting on.
    pub waiting_on: Vec<String>,
}

/// Field-level difference between two heaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub object: String,
    pub field: String,
    pub got: String,
    pub want: String,
}

/// Outcome of [`merge_and_compare`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict")]
pub enum MergeVerdict {
    Equal,
    Diff { diffs: Vec<DiffEntry> },
    /// Two fragments claimed the same object: the ownership partition was
    /// violated, which is an internal error, not a program failure.
    Overlap { object: String },
}

impl MergeVerdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, MergeVerdict::Equal)
    }
}

/// The report of one run in any mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    /// Name of the choreography.
    pub program: String,
    /// Execution mode: "chor", "ir", "endpoints", or "equiv".
    pub mode: String,
    pub params: BTreeMap<String, String>,
    pub verdict: RunVerdict,
    /// Number of failed checks (redundant with `checks`, for quick reading).
    pub failures: usize,
    pub checks: Vec<CheckRecord>,
    /// Ledger audits performed (checking mode); every one passed unless a
    /// `conservation` failure appears in `checks`.
    pub conservation_audits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadlock: Option<DeadlockReport>,
    /// Equivalence comparison (equiv mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<MergeVerdict>,
    /// Canonical snapshot of the final (merged) heap.
    pub final_heap: serde_json::Value,
}

impl RunReport {
    /// `verdict` is `Pass` exactly when nothing failed and nothing blocked:
    /// the invariant every constructor of a report must maintain.
    pub fn conclude(
        checks: &[CheckRecord],
        deadlock: &Option<DeadlockReport>,
        comparison: &Option<MergeVerdict>,
    ) -> (RunVerdict, usize) {
        let failures = checks.iter().filter(|c| !c.passed).count()
            + comparison.as_ref().map_or(0, |c| if c.is_equal() { 0 } else { 1 });
        let verdict = if deadlock.is_some() {
            RunVerdict::Deadlock
        } else if failures > 0 {
            RunVerdict::CheckFail
        } else {
            RunVerdict::Pass
        };
        (verdict, failures)
    }
}

#[derive(Serialize)]
struct ObjSnapshot<'a> {
    id: usize,
    class: &'a str,
    owner: String,
    fields: &'a BTreeMap<String, Value>,
}

/// Canonical JSON snapshot of a heap: objects in id (= construction) order,
/// fields alphabetical. Two runs that reach the same state produce
/// byte-identical snapshots.
pub fn heap_snapshot(heap: &Heap) -> serde_json::Value {
    let objects: Vec<ObjSnapshot> = heap
        .objects()
        .map(|(id, o)| ObjSnapshot {
            id: id.0,
            class: &o.class,
            owner: o.owner.to_string(),
            fields: &o.fields,
        })
        .collect();
    serde_json::json!({ "objects": objects })
}

/// Merge per-instance heap fragments and compare against the reference
/// heap. Object ids are assigned in construction order on both sides, and
/// both sides construct the same instances in the same order, so ids
/// correspond directly.
pub fn merge_and_compare(fragments: &[Heap], reference: &Heap) -> (Heap, MergeVerdict) {
    let mut merged = Heap::new();
    for frag in fragments {
        for (id, obj) in frag.objects() {
            if merged.insert_raw(id, obj.clone()).is_some() {
                return (merged, MergeVerdict::Overlap { object: id.to_string() });
            }
        }
    }
    let verdict = compare_heaps(&merged, reference);
    (merged, verdict)
}

/// Structural comparison of two heaps by construction order.
pub fn compare_heaps(got: &Heap, want: &Heap) -> MergeVerdict {
    let mut diffs = Vec::new();
    let got_map: BTreeMap<_, _> = got.objects().collect();
    let want_map: BTreeMap<_, _> = want.objects().collect();
    for (id, w) in &want_map {
        match got_map.get(id) {
            None => diffs.push(DiffEntry {
                object: id.to_string(),
                field: "<object>".into(),
                got: "<missing>".into(),
                want: format!("{} owned by {}", w.class, w.owner),
            }),
            Some(g) => {
                if g.class != w.class || g.owner != w.owner {
                    diffs.push(DiffEntry {
                        object: id.to_string(),
                        field: "<identity>".into(),
                        got: format!("{} owned by {}", g.class, g.owner),
                        want: format!("{} owned by {}", w.class, w.owner),
                    });
                    continue;
                }
                for (fname, wv) in &w.fields {
                    let gv = g.fields.get(fname);
                    if gv != Some(wv) {
                        diffs.push(DiffEntry {
                            object: id.to_string(),
                            field: fname.clone(),
                            got: gv.map(|v| v.to_string()).unwrap_or_else(|| "<missing>".into()),
                            want: wv.to_string(),
                        });
                    }
                }
            }
        }
    }
    for id in got_map.keys() {
        if !want_map.contains_key(id) {
            diffs.push(DiffEntry {
                object: id.to_string(),
                field: "<object>".into(),
                got: "present".into(),
                want: "<missing>".into(),
            });
        }
    }
    if diffs.is_empty() {
        MergeVerdict::Equal
    } else {
        MergeVerdict::Diff { diffs }
    }
}
