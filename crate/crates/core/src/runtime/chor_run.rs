//! The global-view reference interpreter.
//!
//! Executes the choreography directly, as one sequential program over the
//! whole heap: a communication is a synchronous copy, a ranged statement
//! iterates its range in ascending order, and an `(\endpoint F[i := lo ..
//! hi]; E)` condition conjunct holds when every member satisfies it. This is
//! the semantics the endpoint runs are compared against, so it stays as
//! plain as possible: no ownership checks, no permission accounting
//! (`Perm(...)` is `true`), and contracts and channel invariants are not
//! consulted. Source `assert` statements are evaluated and recorded.

use super::eval::{assign, call_plain_method, eval, EvalHooks, Scopes};
use super::heap::{Heap, InstanceKey};
use super::report::{CheckClass, CheckRecord};
use super::value::{Fatal, ObjId, Value};
use super::world::{check_params, construct_world, setup_stmts, World};
use crate::ast::*;
use crate::frontend::pretty::expr_to_string;
use num_bigint::BigInt;
use std::collections::BTreeMap;

/// Result of a reference run.
#[derive(Debug)]
pub struct ChorOutcome {
    pub heap: Heap,
    pub instances: Vec<(InstanceKey, ObjId)>,
    pub checks: Vec<CheckRecord>,
}

struct RefHooks<'a> {
    program: &'a Program,
    heap: Heap,
    checks: Vec<CheckRecord>,
}

impl EvalHooks for RefHooks<'_> {
    fn program(&self) -> &Program {
        self.program
    }

    fn heap(&self) -> &Heap {
        &self.heap
    }

    fn heap_mut(&mut self) -> &mut Heap {
        &mut self.heap
    }

    fn check(
        &mut self,
        class: CheckClass,
        label: &str,
        passed: bool,
        detail: String,
        site: Option<usize>,
    ) {
        let seq = self.checks.len();
        self.checks.push(CheckRecord {
            seq,
            class,
            label: label.to_string(),
            passed,
            detail,
            site,
        });
    }

    /// Global view: the target only scopes the claim. A single instance
    /// evaluates the body directly; a range demands it of every member.
    fn endpoint_expr(
        &mut self,
        env: &mut Scopes,
        target: &EndpointTarget,
        body: &Expr,
    ) -> Result<Value, Fatal> {
        match target {
            EndpointTarget::Singular { .. } | EndpointTarget::FamilyIndex { .. } => {
                eval(self, env, body)
            }
            EndpointTarget::FamilyRange { binder, lo, hi, .. } => {
                let lo = eval(self, env, lo)?.as_int()?.clone();
                let hi = eval(self, env, hi)?.as_int()?.clone();
                let mut v = lo;
                while v < hi {
                    env.push();
                    env.bind(binder.clone(), Value::Int(v.clone()));
                    let holds = eval(self, env, body).and_then(|r| r.as_bool());
                    env.pop();
                    if !holds? {
                        return Ok(Value::Bool(false));
                    }
                    v += 1;
                }
                Ok(Value::Bool(true))
            }
        }
    }
}

/// Run the choreography on the global view.
pub fn run_choreography(
    program: &Program,
    params: &BTreeMap<String, Value>,
) -> Result<ChorOutcome, Fatal> {
    let chor = program
        .choreography()
        .ok_or_else(|| super::value::fatal("the program must declare exactly one choreography"))?;
    check_params(&chor.params, params)?;
    let World { heap, globals, instances, checks } =
        construct_world(program, &setup_stmts(chor), params)?;
    let mut h = RefHooks { program, heap, checks };
    let mut env = Scopes::from_bindings(globals);
    exec_chor_body(&mut h, &mut env, &chor.run.body)?;
    Ok(ChorOutcome { heap: h.heap, instances, checks: h.checks })
}

fn exec_chor_body(h: &mut RefHooks, env: &mut Scopes, stmts: &[ChorStmt]) -> Result<(), Fatal> {
    for s in stmts {
        exec_chor_stmt(h, env, s)?;
    }
    Ok(())
}

fn exec_chor_stmt(h: &mut RefHooks, env: &mut Scopes, s: &ChorStmt) -> Result<(), Fatal> {
    match &s.kind {
        ChorStmtKind::If { cond, then_branch, else_branch } => {
            if eval(h, env, cond)?.as_bool()? {
                exec_chor_body(h, env, then_branch)
            } else {
                exec_chor_body(h, env, else_branch)
            }
        }
        ChorStmtKind::While { cond, body, .. } => {
            while eval(h, env, cond)?.as_bool()? {
                exec_chor_body(h, env, body)?;
            }
            Ok(())
        }
        ChorStmtKind::Assert { expr } => {
            let passed = eval(h, env, expr)?.as_bool()?;
            let detail = if passed {
                String::new()
            } else {
                format!("assert {} failed", expr_to_string(expr))
            };
            h.check(CheckClass::Plain, "assert", passed, detail, None);
            Ok(())
        }
        ChorStmtKind::Endpoint { target, action } => exec_action(h, env, target, action),
        ChorStmtKind::Communicate { sender, msg, receiver: _, dest, .. } => {
            // A communication is a synchronous copy; the receiver target only
            // names whose memory `dest` lives in.
            match sender {
                EndpointTarget::Singular { .. } | EndpointTarget::FamilyIndex { .. } => {
                    assign(h, env, dest, msg)
                }
                EndpointTarget::FamilyRange { binder, lo, hi, .. } => {
                    each_index(h, env, binder, lo, hi, |h, env| assign(h, env, dest, msg))
                }
            }
        }
    }
}

fn exec_action(
    h: &mut RefHooks,
    env: &mut Scopes,
    target: &EndpointTarget,
    action: &EpAction,
) -> Result<(), Fatal> {
    let run_one = |h: &mut RefHooks, env: &mut Scopes| match action {
        EpAction::Assign { dest, value } => assign(h, env, dest, value),
        EpAction::Call { recv, method, args } => call_plain_method(h, env, recv, method, args),
    };
    match target {
        EndpointTarget::Singular { .. } | EndpointTarget::FamilyIndex { .. } => run_one(h, env),
        EndpointTarget::FamilyRange { binder, lo, hi, .. } => {
            each_index(h, env, binder, lo, hi, run_one)
        }
    }
}

/// Run `f` for each index in `[lo, hi)`, ascending, with `binder` bound.
fn each_index(
    h: &mut RefHooks,
    env: &mut Scopes,
    binder: &str,
    lo: &Expr,
    hi: &Expr,
    mut f: impl FnMut(&mut RefHooks, &mut Scopes) -> Result<(), Fatal>,
) -> Result<(), Fatal> {
    let lo = eval(h, env, lo)?.as_int()?.clone();
    let hi = eval(h, env, hi)?.as_int()?.clone();
    let mut v: BigInt = lo;
    while v < hi {
        env.push();
        env.bind(binder.to_string(), Value::Int(v.clone()));
        let r = f(h, env);
        env.pop();
        r?;
        v += 1;
    }
    Ok(())
}
