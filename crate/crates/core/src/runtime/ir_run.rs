//! The checking interpreter for the projected verification program.
//!
//! Runs the sequential program and dynamically discharges every check the
//! projection emitted:
//!
//! * **Confinement** — inside a `Confined(r, …)` region every data access
//!   must touch memory owned by `r`; a foreign access records a failure.
//! * **Permissions** — the ledger starts with `1` per field location held by
//!   the owner. An `exhale` debits the named instance and parks the amount
//!   in flight on the channel; the matching `inhale` sources from that
//!   flight (or, failing that, from unheld capacity — anything beyond is
//!   forgery and fails). A conservation audit runs after every transfer.
//! * **Asserted resources** (contracts, unanimity, injectivity, loop
//!   invariants, `par` pre/post) are checked by a *scratch exhale*: the
//!   resource must be coverable from the current state, so separating
//!   conjuncts of permissions sum, exactly as `**` demands.
//! * **Par disjointness** — iterations run sequentially in ascending order
//!   while their data reads and writes are recorded; footprints must be
//!   pairwise non-conflicting. Permission bookkeeping is not a data access
//!   and stays out of footprints.
//!
//! Failures are recorded and execution continues where safe (fail-soft);
//! only type errors abort the run.

use super::eval::{assign, eval, lookup_method, EvalHooks, Scopes};
use super::heap::{Footprint, FlightKey, Heap, InstanceKey, PermLedger};
use super::report::{CheckClass, CheckRecord};
use super::value::{fatal, Fatal, Frac, ObjId, Value};
use super::world::{check_params, construct_world, World};
use crate::ast::*;
use crate::frontend::pretty::expr_to_string;
use crate::vir::{ChannelUse, CheckKind, InstanceRef, VStmt, VerificationProgram};
use num_bigint::BigInt;
use std::collections::BTreeMap;

/// Result of a checking run.
#[derive(Debug)]
pub struct IrOutcome {
    pub heap: Heap,
    pub instances: Vec<(InstanceKey, ObjId)>,
    pub checks: Vec<CheckRecord>,
    pub conservation_audits: usize,
    /// Final ledger, for tests that inspect holdings.
    pub ledger: PermLedger,
}

/// Execute the verification program under full dynamic checking.
pub fn run_verification_ir(
    program: &Program,
    v: &VerificationProgram,
    params: &BTreeMap<String, Value>,
) -> Result<IrOutcome, Fatal> {
    check_params(&v.params, params)?;
    let World { heap, globals, instances, checks } = construct_world(program, &v.setup, params)?;

    let mut ledger = PermLedger::new();
    for (key, id) in &instances {
        let fields: Vec<String> = heap.get(*id)?.fields.keys().cloned().collect();
        for f in fields {
            ledger.init_location((*id, f), key.clone());
        }
    }

    let mut cx = IrCtx {
        program,
        heap,
        ledger,
        confinement: Vec::new(),
        footprints: Vec::new(),
        suppress: 0,
        checks: Vec::new(),
        audits: 0,
    };
    for c in checks {
        cx.checks.push(CheckRecord { seq: cx.checks.len(), ..c });
    }
    let mut env = Scopes::from_bindings(globals);
    cx.exec(&mut env, &v.body)?;
    Ok(IrOutcome {
        heap: cx.heap,
        instances,
        checks: cx.checks,
        conservation_audits: cx.audits,
        ledger: cx.ledger,
    })
}

/// How a resource expression acts on the ledger while being walked.
enum RMode {
    /// Scratch check: debit (from `pool`, or from anyone when `None`) so
    /// that separating conjuncts sum; the caller restores the ledger.
    Check { pool: Option<InstanceKey> },
    /// Transfer out of `at`'s holdings into flight on `key`.
    Exhale { at: InstanceKey, key: FlightKey },
    /// Transfer into `at`'s holdings, sourced from flight on `key`.
    Inhale { at: InstanceKey, key: FlightKey },
}

struct IrCtx<'a> {
    program: &'a Program,
    heap: Heap,
    ledger: PermLedger,
    /// Active confined regions, innermost last.
    confinement: Vec<InstanceKey>,
    /// Active `par` iteration footprints (nested `par`s stack).
    footprints: Vec<Footprint>,
    /// Depth of resource walking; data accesses during it stay out of
    /// footprints.
    suppress: u32,
    checks: Vec<CheckRecord>,
    audits: usize,
}

impl EvalHooks for IrCtx<'_> {
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

    fn note_read(&mut self, obj: ObjId, field: &str) {
        self.enforce_confinement(obj, field, false);
        if self.suppress == 0 {
            for fp in &mut self.footprints {
                fp.reads.insert((obj, field.to_string()));
            }
        }
    }

    fn note_write(&mut self, obj: ObjId, field: &str) {
        self.enforce_confinement(obj, field, true);
        if self.suppress == 0 {
            for fp in &mut self.footprints {
                fp.writes.insert((obj, field.to_string()));
            }
        }
    }

    /// `Perm` in a truth position: the current confinement owner must hold
    /// the amount; outside any confined region the total held suffices.
    fn perm_holds(&mut self, obj: ObjId, field: &str, amount: &Frac) -> bool {
        let loc = (obj, field.to_string());
        let held = match self.confinement.last() {
            Some(owner) => self.ledger.held_by(&loc, owner),
            None => self.ledger.total_held(&loc),
        };
        held >= *amount
    }

    /// Evaluate `body` with accesses confined to the target instance.
    fn confined_expr(
        &mut self,
        env: &mut Scopes,
        target: &ConfineTarget,
        body: &Expr,
    ) -> Result<Value, Fatal> {
        let key = self.resolve_confine(env, target)?;
        self.confinement.push(key);
        let out = eval(self, env, body);
        self.confinement.pop();
        out
    }
}

impl<'a> IrCtx<'a> {
    fn enforce_confinement(&mut self, obj: ObjId, field: &str, write: bool) {
        let Some(owner) = self.confinement.last().cloned() else { return };
        let Ok(actual) = self.heap.get(obj).map(|o| o.owner.clone()) else { return };
        if actual != owner {
            let verb = if write { "write to" } else { "read of" };
            self.check(
                CheckClass::Confinement,
                "confined",
                false,
                format!(
                    "{verb} {obj}.{field} (owned by {actual}) inside a region confined to {owner}"
                ),
                None,
            );
        }
    }

    fn resolve_instance(&mut self, env: &mut Scopes, at: &InstanceRef) -> Result<InstanceKey, Fatal> {
        let index = match &at.index {
            None => None,
            Some(e) => Some(eval(self, env, e)?.as_int()?.clone()),
        };
        Ok(InstanceKey { sort: at.sort.clone(), index })
    }

    fn resolve_confine(
        &mut self,
        env: &mut Scopes,
        target: &ConfineTarget,
    ) -> Result<InstanceKey, Fatal> {
        let index = match &target.index {
            None => None,
            Some(e) => Some(eval(self, env, e)?.as_int()?.clone()),
        };
        Ok(InstanceKey { sort: target.sort.clone(), index })
    }

    fn flight_key(
        &mut self,
        env: &mut Scopes,
        chan: &Option<ChannelUse>,
    ) -> Result<FlightKey, Fatal> {
        match chan {
            None => Ok(FlightKey::Limbo),
            Some(c) => {
                let idx = |cx: &mut Self, env: &mut Scopes, r: &InstanceRef| -> Result<BigInt, Fatal> {
                    match &r.index {
                        None => Ok(BigInt::from(0)),
                        Some(e) => Ok(eval(cx, env, e)?.as_int()?.clone()),
                    }
                };
                let sender = idx(self, env, &c.sender)?;
                let receiver = idx(self, env, &c.receiver)?;
                Ok(FlightKey::Chan { site: c.site, sender, receiver })
            }
        }
    }

    fn audit(&mut self) {
        self.audits += 1;
        for violation in self.ledger.audit() {
            self.check(CheckClass::Conservation, "ledger", false, violation, None);
        }
    }

    /// Walk a resource expression, acting on the ledger per `mode` and
    /// collecting failure descriptions. `&&` conjoins cumulatively like `**`
    /// here: both arms describe state that must hold together.
    fn walk_resource(
        &mut self,
        env: &mut Scopes,
        e: &Expr,
        mode: &RMode,
        fails: &mut Vec<String>,
    ) -> Result<(), Fatal> {
        match &e.kind {
            ExprKind::BinOp { op: BinOp::And, lhs, rhs } | ExprKind::SepConj { lhs, rhs } => {
                self.walk_resource(env, lhs, mode, fails)?;
                self.walk_resource(env, rhs, mode, fails)
            }
            ExprKind::BinOp { op: BinOp::Implies, lhs, rhs } => {
                if eval(self, env, lhs)?.as_bool()? {
                    self.walk_resource(env, rhs, mode, fails)?;
                }
                Ok(())
            }
            ExprKind::Forall { binder, lo, hi, body }
            | ExprKind::QuantPerm { binder, lo, hi, body, .. } => {
                let lo = eval(self, env, lo)?.as_int()?.clone();
                let hi = eval(self, env, hi)?.as_int()?.clone();
                let mut v = lo;
                while v < hi {
                    env.push();
                    env.bind(binder.clone(), Value::Int(v.clone()));
                    let r = self.walk_resource(env, body, mode, fails);
                    env.pop();
                    r?;
                    v += 1;
                }
                Ok(())
            }
            ExprKind::Perm { place, amount } => {
                let (id, field) = super::eval::resolve_place(self, env, place)?;
                let amt = eval(self, env, amount)?.as_frac()?;
                if !amt.is_permission_amount() {
                    return Err(fatal(format!("invalid permission amount {amt}")));
                }
                let loc = (id, field);
                let place_text = expr_to_string(place);
                match mode {
                    RMode::Check { pool } => {
                        let taken = match pool {
                            Some(p) => self.ledger.debit(&loc, p, &amt),
                            None => self.ledger.debit_any(&loc, &amt),
                        };
                        if taken < amt {
                            fails.push(format!(
                                "insufficient permission on {place_text}: needed {amt}, found {taken}"
                            ));
                        }
                    }
                    RMode::Exhale { at, key } => {
                        let taken = self.ledger.debit(&loc, at, &amt);
                        if taken < amt {
                            fails.push(format!(
                                "{at} exhales {amt} of {place_text} but holds only {taken}"
                            ));
                        }
                        self.ledger.flight_put(key.clone(), loc, taken);
                    }
                    RMode::Inhale { at, key } => {
                        let got = self.ledger.flight_take(key, &loc, &amt);
                        let mut credit = got.clone();
                        if got < amt {
                            let wanted = amt.clone() - got;
                            let spare = self.ledger.unheld(&loc);
                            let extra = wanted.clone().min(spare);
                            credit = credit + extra.clone();
                            if extra < wanted {
                                fails.push(format!(
                                    "cannot source {amt} of {place_text} for {at}: \
                                     {credit} available in flight and unheld"
                                ));
                            }
                        }
                        self.ledger.credit(&loc, at, credit);
                    }
                }
                Ok(())
            }
            ExprKind::PredApply { name, args } => {
                let decl = self
                    .program
                    .predicate(name)
                    .ok_or_else(|| fatal(format!("unknown resource predicate `{name}`")))?
                    .clone();
                if decl.params.len() != args.len() {
                    return Err(fatal(format!("resource `{name}` arity mismatch")));
                }
                let mut frame = BTreeMap::new();
                for (p, a) in decl.params.iter().zip(args) {
                    frame.insert(p.name.clone(), eval(self, env, a)?);
                }
                let mut inner = Scopes::from_bindings(frame);
                self.walk_resource(&mut inner, &decl.body, mode, fails)
            }
            // A pure or heap-level conjunct: evaluate its truth.
            _ => {
                if !eval(self, env, e)?.as_bool()? {
                    fails.push(format!("conjunct {} is false", expr_to_string(e)));
                }
                Ok(())
            }
        }
    }

    /// Check a resource against the current state without changing it:
    /// scratch-exhale on a ledger copy, then restore.
    fn assert_resource(
        &mut self,
        env: &mut Scopes,
        kind: CheckKind,
        label: &str,
        expr: &Expr,
        site: Option<usize>,
    ) -> Result<(), Fatal> {
        self.suppress += 1;
        let saved = self.ledger.clone();
        let pool = self.confinement.last().cloned();
        let mut fails = Vec::new();
        let walked = self.walk_resource(env, expr, &RMode::Check { pool }, &mut fails);
        self.ledger = saved;
        self.suppress -= 1;
        walked?;
        let passed = fails.is_empty();
        self.check(kind.into(), label, passed, fails.join("; "), site);
        Ok(())
    }

    fn exec(&mut self, env: &mut Scopes, stmts: &[VStmt]) -> Result<(), Fatal> {
        for s in stmts {
            self.exec_stmt(env, s)?;
        }
        Ok(())
    }

    fn exec_stmt(&mut self, env: &mut Scopes, s: &VStmt) -> Result<(), Fatal> {
        match s {
            VStmt::Let { name, at, value } => {
                let key = self.resolve_instance(env, at)?;
                self.confinement.push(key);
                let v = eval(self, env, value);
                self.confinement.pop();
                env.bind(name.clone(), v?);
                Ok(())
            }
            VStmt::Assign { dest, value } => assign(self, env, dest, value),
            VStmt::Assert { check, label, expr } => {
                self.assert_resource(env, *check, label, expr, None)
            }
            VStmt::Exhale { at, chan, resource } => {
                let at_key = self.resolve_instance(env, at)?;
                let key = self.flight_key(env, chan)?;
                self.suppress += 1;
                let mut fails = Vec::new();
                let walked = self.walk_resource(
                    env,
                    resource,
                    &RMode::Exhale { at: at_key.clone(), key },
                    &mut fails,
                );
                self.suppress -= 1;
                walked?;
                let label = format!("exhale@{at_key}");
                let site = chan.as_ref().map(|c| c.site);
                self.check(CheckClass::Permission, &label, fails.is_empty(), fails.join("; "), site);
                self.audit();
                Ok(())
            }
            VStmt::Inhale { at, chan, resource } => {
                let at_key = self.resolve_instance(env, at)?;
                let key = self.flight_key(env, chan)?;
                self.suppress += 1;
                let mut fails = Vec::new();
                let walked = self.walk_resource(
                    env,
                    resource,
                    &RMode::Inhale { at: at_key.clone(), key },
                    &mut fails,
                );
                self.suppress -= 1;
                walked?;
                let label = format!("inhale@{at_key}");
                let site = chan.as_ref().map(|c| c.site);
                self.check(
                    CheckClass::ChannelInhale,
                    &label,
                    fails.is_empty(),
                    fails.join("; "),
                    site,
                );
                self.audit();
                Ok(())
            }
            VStmt::If { cond, then_branch, else_branch } => {
                if eval(self, env, cond)?.as_bool()? {
                    self.exec(env, then_branch)
                } else {
                    self.exec(env, else_branch)
                }
            }
            VStmt::While { invariants, cond, body } => {
                for (i, inv) in invariants.iter().enumerate() {
                    self.assert_resource(
                        env,
                        CheckKind::LoopInvariant,
                        &format!("entry #{i}"),
                        inv,
                        None,
                    )?;
                }
                while eval(self, env, cond)?.as_bool()? {
                    self.exec(env, body)?;
                    for (i, inv) in invariants.iter().enumerate() {
                        self.assert_resource(
                            env,
                            CheckKind::LoopInvariant,
                            &format!("iteration #{i}"),
                            inv,
                            None,
                        )?;
                    }
                }
                Ok(())
            }
            VStmt::MethodCall { recv, method, args } => self.call_checked(env, recv, method, args),
            VStmt::Par { binder, lo, hi, requires, ensures, body } => {
                self.run_par(env, binder, lo, hi, requires, ensures, |cx, env| {
                    cx.exec(env, body)
                })
            }
            VStmt::Confined { target, body } => {
                let key = self.resolve_instance(env, target)?;
                self.confinement.push(key);
                let r = self.exec(env, body);
                self.confinement.pop();
                r
            }
        }
    }

    /// Contract-checked dynamic dispatch: precondition asserted on entry,
    /// postcondition on exit, body executed with ledger semantics.
    fn call_checked(
        &mut self,
        env: &mut Scopes,
        recv: &Expr,
        method: &str,
        args: &[Expr],
    ) -> Result<(), Fatal> {
        let this = eval(self, env, recv)?.as_ref_id()?;
        let (decl, class_name) = lookup_method(self, this, method)?;
        if decl.params.len() != args.len() {
            return Err(fatal(format!("method `{method}` arity mismatch")));
        }
        let mut frame = BTreeMap::new();
        frame.insert("this".to_string(), Value::Ref(this));
        for (p, a) in decl.params.iter().zip(args) {
            frame.insert(p.name.clone(), eval(self, env, a)?);
        }
        let mut inner = Scopes::from_bindings(frame);
        let label = format!("{class_name}.{method}");
        self.assert_resource(&mut inner, CheckKind::ContractPre, &label, &decl.contract.pre(), None)?;
        self.exec_method_body(&mut inner, &decl.body)?;
        self.assert_resource(
            &mut inner,
            CheckKind::ContractPost,
            &label,
            &decl.contract.post(),
            None,
        )?;
        Ok(())
    }

    fn exec_method_body(&mut self, env: &mut Scopes, stmts: &[MethodStmt]) -> Result<(), Fatal> {
        for s in stmts {
            match &s.kind {
                MethodStmtKind::Assert { expr } => {
                    self.assert_resource(env, CheckKind::Plain, "method-assert", expr, None)?;
                }
                MethodStmtKind::Exhale { expr } => {
                    let at = self.confinement.last().cloned().ok_or_else(|| {
                        fatal("exhale outside any confined region")
                    })?;
                    self.suppress += 1;
                    let mut fails = Vec::new();
                    let walked = self.walk_resource(
                        env,
                        expr,
                        &RMode::Exhale { at, key: FlightKey::Limbo },
                        &mut fails,
                    );
                    self.suppress -= 1;
                    walked?;
                    self.check(
                        CheckClass::Permission,
                        "user-exhale",
                        fails.is_empty(),
                        fails.join("; "),
                        None,
                    );
                    self.audit();
                }
                MethodStmtKind::Inhale { expr } => {
                    let at = self.confinement.last().cloned().ok_or_else(|| {
                        fatal("inhale outside any confined region")
                    })?;
                    self.suppress += 1;
                    let mut fails = Vec::new();
                    let walked = self.walk_resource(
                        env,
                        expr,
                        &RMode::Inhale { at, key: FlightKey::Limbo },
                        &mut fails,
                    );
                    self.suppress -= 1;
                    walked?;
                    self.check(
                        CheckClass::ChannelInhale,
                        "user-inhale",
                        fails.is_empty(),
                        fails.join("; "),
                        None,
                    );
                    self.audit();
                }
                MethodStmtKind::Assign { dest, value } => assign(self, env, dest, value)?,
                MethodStmtKind::Call { recv, method, args } => {
                    self.call_checked(env, recv, method, args)?;
                }
                MethodStmtKind::If { cond, then_branch, else_branch } => {
                    if eval(self, env, cond)?.as_bool()? {
                        self.exec_method_body(env, then_branch)?;
                    } else {
                        self.exec_method_body(env, else_branch)?;
                    }
                }
                MethodStmtKind::While { invariants, cond, body } => {
                    for (i, inv) in invariants.iter().enumerate() {
                        self.assert_resource(
                            env,
                            CheckKind::LoopInvariant,
                            &format!("entry #{i}"),
                            inv,
                            None,
                        )?;
                    }
                    while eval(self, env, cond)?.as_bool()? {
                        self.exec_method_body(env, body)?;
                        for (i, inv) in invariants.iter().enumerate() {
                            self.assert_resource(
                                env,
                                CheckKind::LoopInvariant,
                                &format!("iteration #{i}"),
                                inv,
                                None,
                            )?;
                        }
                    }
                }
                MethodStmtKind::Par { contract, binder, lo, hi, body, .. } => {
                    self.run_par(env, binder, lo, hi, &contract.pre(), &contract.post(), |cx, env| {
                        cx.exec_method_body(env, body)
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Sequential stand-in for parallel iterations: per-iteration contract
    /// asserts plus the pairwise footprint disjointness check.
    #[allow(clippy::too_many_arguments)]
    fn run_par(
        &mut self,
        env: &mut Scopes,
        binder: &str,
        lo: &Expr,
        hi: &Expr,
        requires: &Expr,
        ensures: &Expr,
        exec: impl Fn(&mut Self, &mut Scopes) -> Result<(), Fatal>,
    ) -> Result<(), Fatal> {
        let lo = eval(self, env, lo)?.as_int()?.clone();
        let hi = eval(self, env, hi)?.as_int()?.clone();
        let mut prints: Vec<(BigInt, Footprint)> = Vec::new();
        let mut v = lo;
        while v < hi {
            env.push();
            env.bind(binder.to_string(), Value::Int(v.clone()));
            let label = format!("{binder} = {v}");
            let run = self
                .assert_resource(env, CheckKind::ParPre, &label, requires, None)
                .and_then(|()| {
                    self.footprints.push(Footprint::default());
                    let r = exec(self, env);
                    let fp = self.footprints.pop().expect("footprint frame");
                    r.map(|()| fp)
                })
                .and_then(|fp| {
                    self.assert_resource(env, CheckKind::ParPost, &label, ensures, None)?;
                    Ok(fp)
                });
            env.pop();
            prints.push((v.clone(), run?));
            v += 1;
        }
        let mut conflicts = Vec::new();
        for i in 0..prints.len() {
            for j in i + 1..prints.len() {
                for (obj, field) in prints[i].1.conflicts(&prints[j].1) {
                    conflicts.push(format!(
                        "{obj}.{field} accessed by iterations {binder} = {} and {binder} = {}",
                        prints[i].0, prints[j].0
                    ));
                }
            }
        }
        self.check(
            CheckClass::ParDisjointness,
            "par",
            conflicts.is_empty(),
            conflicts.join("; "),
            None,
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chor_projection::project_chor;
    use crate::frontend::parse;

    fn run(src: &str, params: &[(&str, i64)]) -> IrOutcome {
        let p = parse(src).expect("parse");
        let diags = crate::wellformed::check_wellformed(&p);
        assert!(crate::diag::is_clean(&diags), "{diags:?}");
        let (v, _) = project_chor(&p).expect("project");
        let map: BTreeMap<String, Value> =
            params.iter().map(|(k, v)| (k.to_string(), Value::int(*v))).collect();
        run_verification_ir(&p, &v, &map).expect("run")
    }

    fn failures(out: &IrOutcome) -> Vec<&CheckRecord> {
        out.checks.iter().filter(|c| !c.passed).collect()
    }

    const HEADER: &str = r#"
class Cell {
  int x;
  int y;

  constructor(int v) {
    this.x := v;
  }

  requires Perm(this.x, 1);
  ensures Perm(this.x, 1);
  int bump(int k) {
    this.x := this.x + k;
  }
}
"#;

    #[test]
    fn clean_two_party_exchange_passes_every_check() {
        let src = format!(
            r#"{HEADER}
choreography T() {{
  endpoint a = Cell(7);
  endpoint b = Cell(0);
  run {{
    channel_invariant \msg == 7;
    communicate a: a.x -> b: b.y;
    assert (\chor b.y == a.x);
  }}
}}
"#
        );
        let out = run(&src, &[]);
        assert!(failures(&out).is_empty(), "{:?}", failures(&out));
        assert_eq!(out.heap.read(ObjId(1), "y").unwrap(), Value::int(7));
        assert!(out.conservation_audits >= 2);
    }

    #[test]
    fn foreign_write_inside_confined_region_fails_once() {
        let src = format!(
            r#"{HEADER}
choreography T() {{
  endpoint a = Cell(0);
  endpoint b = Cell(0);
  run {{
    endpoint a: b.y := 1;
  }}
}}
"#
        );
        let out = run(&src, &[]);
        let fails = failures(&out);
        assert_eq!(fails.len(), 1, "{fails:?}");
        assert_eq!(fails[0].class, CheckClass::Confinement);
        assert!(fails[0].detail.contains("confined to a"), "{}", fails[0].detail);
    }

    #[test]
    fn channel_invariant_transfers_permission() {
        let src = format!(
            r#"{HEADER}
choreography T() {{
  endpoint a = Cell(7);
  endpoint b = Cell(0);
  run {{
    channel_invariant Perm(\sender.x, 1\2) ** \msg == \sender.x;
    communicate a: a.x -> b: b.y;
  }}
}}
"#
        );
        let out = run(&src, &[]);
        assert!(failures(&out).is_empty(), "{:?}", failures(&out));
        let a = InstanceKey::singular("a");
        let b = InstanceKey::singular("b");
        let half = Frac::new(1.into(), 2.into()).unwrap();
        let loc = (ObjId(0), "x".to_string());
        assert_eq!(out.ledger.held_by(&loc, &a), half);
        assert_eq!(out.ledger.held_by(&loc, &b), half);
        assert!(out.ledger.audit().is_empty());
    }

    #[test]
    fn unanimity_failure_is_detected_when_views_disagree() {
        let src = format!(
            r#"{HEADER}
choreography T() {{
  endpoint a = Cell(1);
  endpoint b = Cell(2);
  run {{
    if ((\endpoint a; a.x > 1) && (\endpoint b; b.x > 1)) {{
      endpoint a: a.y := 1;
      endpoint b: b.y := 1;
    }}
  }}
}}
"#
        );
        let out = run(&src, &[]);
        let fails = failures(&out);
        assert_eq!(fails.len(), 1, "{fails:?}");
        assert_eq!(fails[0].class, CheckClass::Unanimity);
        assert_eq!(fails[0].label, "if-condition");
    }

    #[test]
    fn unanimity_passes_when_views_agree() {
        let src = format!(
            r#"{HEADER}
choreography T() {{
  endpoint a = Cell(5);
  endpoint b = Cell(5);
  run {{
    if ((\endpoint a; a.x > 1) && (\endpoint b; b.x > 1)) {{
      endpoint a: a.y := 1;
      endpoint b: b.y := 1;
    }}
  }}
}}
"#
        );
        let out = run(&src, &[]);
        assert!(failures(&out).is_empty(), "{:?}", failures(&out));
        assert_eq!(out.heap.read(ObjId(0), "y").unwrap(), Value::int(1));
    }

    #[test]
    fn constant_receiver_map_fails_injectivity() {
        let src = format!(
            r#"{HEADER}
choreography T(int n) {{
  endpoint F[i := 0 .. n] = Cell(i);
  endpoint G[i := 0 .. n] = Cell(0);
  run {{
    communicate F[i := 0 .. n]: F[i].x -> G[0]: G[0].y;
  }}
}}
"#
        );
        let out = run(&src, &[("n", 3)]);
        let inj: Vec<_> = out
            .checks
            .iter()
            .filter(|c| c.class == CheckClass::Injectivity)
            .collect();
        assert_eq!(inj.len(), 1);
        assert!(!inj[0].passed);
        // The same mutant also trips par disjointness: every iteration
        // writes G[0].y.
        assert!(out
            .checks
            .iter()
            .any(|c| c.class == CheckClass::ParDisjointness && !c.passed));
    }

    #[test]
    fn injective_shift_passes_injectivity_and_disjointness() {
        let src = format!(
            r#"{HEADER}
choreography T(int n) {{
  endpoint F[i := 0 .. n - 1] = Cell(i);
  endpoint G[i := 0 .. n] = Cell(0);
  run {{
    channel_invariant Perm(\sender.x, 1\2) ** \msg == \sender.x;
    communicate F[i := 0 .. n - 1]: F[i].x -> G[i + 1]: G[i + 1].y;
  }}
}}
"#
        );
        let out = run(&src, &[("n", 4)]);
        assert!(failures(&out).is_empty(), "{:?}", failures(&out));
        assert!(out.checks.iter().any(|c| c.class == CheckClass::Injectivity && c.passed));
        assert!(out
            .checks
            .iter()
            .any(|c| c.class == CheckClass::ParDisjointness && c.passed));
        // Ranged transfer: every F member gave away half its x permission.
        let half = Frac::new(1.into(), 2.into()).unwrap();
        for i in 0..3 {
            let f = InstanceKey::member("F", i);
            let g = InstanceKey::member("G", i + 1);
            let loc = (ObjId(i as usize), "x".to_string());
            assert_eq!(out.ledger.held_by(&loc, &f), half.clone() );
            assert_eq!(out.ledger.held_by(&loc, &g), half.clone());
        }
    }

    #[test]
    fn ranged_method_call_checks_contracts_per_iteration() {
        let src = format!(
            r#"{HEADER}
choreography T(int n) {{
  endpoint F[i := 0 .. n] = Cell(i);
  run {{
    endpoint F[i := 0 .. n]: F[i].bump(10);
  }}
}}
"#
        );
        let out = run(&src, &[("n", 3)]);
        assert!(failures(&out).is_empty(), "{:?}", failures(&out));
        let pre = out.checks.iter().filter(|c| c.class == CheckClass::ParPre).count();
        let post = out.checks.iter().filter(|c| c.class == CheckClass::ParPost).count();
        assert_eq!((pre, post), (3, 3));
        for i in 0..3usize {
            assert_eq!(out.heap.read(ObjId(i), "x").unwrap(), Value::int(i as i64 + 10));
        }
    }

    #[test]
    fn loop_invariants_are_asserted_at_entry_and_each_iteration() {
        let src = format!(
            r#"{HEADER}
choreography T() {{
  endpoint a = Cell(0);
  run {{
    loop_invariant (\endpoint a; a.x >= 0);
    while ((\endpoint a; a.x < 2)) {{
      endpoint a: a.x := a.x + 1;
    }}
  }}
}}
"#
        );
        let out = run(&src, &[]);
        assert!(failures(&out).is_empty(), "{:?}", failures(&out));
        let inv = out
            .checks
            .iter()
            .filter(|c| c.class == CheckClass::LoopInvariant)
            .count();
        // entry + one per completed iteration (2 iterations).
        assert_eq!(inv, 3);
    }

    #[test]
    fn conservation_holds_through_every_transfer() {
        let src = format!(
            r#"{HEADER}
choreography T(int n) {{
  endpoint F[i := 0 .. n - 1] = Cell(i);
  endpoint G[i := 0 .. n] = Cell(0);
  run {{
    channel_invariant Perm(\sender.x, 1\2);
    communicate F[i := 0 .. n - 1]: F[i].x -> G[i + 1]: G[i + 1].y;
  }}
}}
"#
        );
        let out = run(&src, &[("n", 8)]);
        assert!(out.conservation_audits >= 14, "audits: {}", out.conservation_audits);
        assert!(!out.checks.iter().any(|c| c.class == CheckClass::Conservation));
    }
}
