//! Compiler and execution harness for a parameterized choreographic DSL.
//!
//! A *choreography* describes, from a global viewpoint, how a fixed set of
//! endpoints — singular ones like `a`, and indexed families like `F[i := 0 .. n]`
//! — update their private state and exchange messages. This crate implements
//! the full pipeline around that language:
//!
//! * [`frontend`] — lexer, recursive-descent parser, pretty-printer and a
//!   versioned JSON encoding of the AST,
//! * [`ast`] — the syntax tree plus the semantic helpers (`sort`, `covers`,
//!   contract instantiation, purity levels),
//! * [`wellformed`] — the static sanity checks that must pass before
//!   projection,
//! * [`chor_projection`] — projection of a choreography onto a single
//!   sequential verification program with `inhale`/`exhale`/`assert`/`par`
//!   instrumentation,
//! * [`ep_projection`] — projection onto one program per endpoint sort plus a
//!   channel table, including inversion of receiver index maps,
//! * [`runtime`] — a reference interpreter for choreographies, a checking
//!   interpreter for verification programs (permission ledger, confinement,
//!   unanimity, injectivity, par disjointness), and a concurrent endpoint
//!   simulator with exact deadlock detection.
//!
//! The three execution modes are designed to agree: for a well-formed
//! choreography the merged final heap of the endpoint simulation equals the
//! final heap of the reference run, regardless of scheduling.

pub mod ast;
pub mod chor_projection;
pub mod diag;
pub mod ep;
pub mod ep_projection;
pub mod frontend;
pub mod rules;
pub mod runtime;
pub mod subst;
pub mod vir;
pub mod wellformed;

pub use ast::{
    BinOp, CalleeRef, ChorStmt, ChorStmtKind, Choreography, ClassDecl, Contract, Coverage, Decl,
    EndpointDecl, EndpointTarget, EpAction, Expr, ExprKind, FunctionDecl, MethodDecl, MethodStmt,
    MethodStmtKind, PredicateDecl, Program, PurityLevel, SortTag, Type,
};
pub use diag::{Diagnostic, DiagCode, Severity, Span};
pub use ep::{ChanRef, ChannelEntry, ChannelTable, EStmt, EndpointProgram};
pub use rules::{Rule, RuleTrace};
pub use runtime::{
    drive, run_choreography, run_endpoints, run_verification_ir, CheckClass, CheckRecord,
    DriveOutcome, Heap, InstanceKey, MergeVerdict, Mode, ObjId, RunConfig, RunReport, RunVerdict,
    Schedule, Value,
};
pub use vir::{CheckKind, InstanceRef, SetupStmt, VStmt, VerificationProgram};
