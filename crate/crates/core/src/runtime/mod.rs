//! Execution: a reference interpreter for the global view, a checking
//! interpreter for the projected verification program, and a concurrent
//! simulator for the projected endpoint programs — plus the shared value
//! model, heap, permission ledger, and run reports.

pub mod chor_run;
pub mod driver;
pub mod eval;
pub mod heap;
pub mod ir_run;
pub mod report;
pub mod sim;
pub mod value;
pub mod world;

pub use chor_run::{run_choreography, ChorOutcome};
pub use driver::{drive, DriveError, DriveOutcome, Mode, RunConfig};
pub use eval::{eval, EvalHooks, Scopes};
pub use heap::{FlightKey, Footprint, Heap, InstanceKey, Loc, Object, PermLedger};
pub use ir_run::{run_verification_ir, IrOutcome};
pub use report::{
    compare_heaps, heap_snapshot, merge_and_compare, CheckClass, CheckRecord, DeadlockReport,
    DiffEntry, MergeVerdict, RunReport, RunVerdict,
};
pub use sim::{run_endpoints, Schedule, SimOutcome};
pub use value::{Fatal, Frac, ObjId, Value};
pub use world::{check_params, construct_world, World};
