//! Choreographic projection: one choreography → one sequential
//! verification program.
//!
//! The projection walks the run body statement by statement:
//!
//! * assignments and method calls become [`VStmt::Confined`] regions owned
//!   by the target instance;
//! * ranged method calls become [`VStmt::Par`] blocks whose iteration
//!   contract is the callee's contract instantiated at the ranged member;
//! * communications become a four-step block — evaluate the message at the
//!   sender, exhale the instantiated channel invariant from the sender,
//!   inhale it at the receiver, write the destination at the receiver — and
//!   ranged communications additionally assert that the receiver index map
//!   is injective, then run the four steps inside a `par`;
//! * `if`/`while` emit a unanimity assertion (all mentioned instances
//!   evaluate the condition alike) before the branch, and loops re-assert
//!   unanimity after every iteration;
//! * conditions and invariants are rewritten so that every `\endpoint`
//!   conjunct becomes a confined evaluation (ranges become bounded `forall`)
//!   and every `\chor` body is included verbatim — the verification program
//!   is the one place global facts survive.

use crate::ast::*;
use crate::diag::Span;
use crate::rules::{Rule, RuleTrace};
use crate::subst::{fresh_name, subst_placeholders, subst_var, target_to_expr};
use crate::vir::*;
use std::collections::BTreeSet;

/// Why a choreography cannot be projected. `check_wellformed` catches most
/// ill-formed inputs earlier; these are the residual, projection-specific
/// restrictions.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProjectError {
    #[error("{}:{}: unsupported syntax: {msg}", span.line, span.col)]
    UnsupportedSyntax { span: Span, msg: String },
    #[error("{}:{}: unresolved reference: {msg}", span.line, span.col)]
    Unresolved { span: Span, msg: String },
}

fn unsupported(span: Span, msg: impl Into<String>) -> ProjectError {
    ProjectError::UnsupportedSyntax { span, msg: msg.into() }
}

/// Project the program's choreography into a sequential verification
/// program, together with the trace of projection rules that fired.
pub fn project_chor(program: &Program) -> Result<(VerificationProgram, RuleTrace), ProjectError> {
    let chor = program.choreography().ok_or_else(|| ProjectError::Unresolved {
        span: Span::default(),
        msg: "the program must declare exactly one choreography".into(),
    })?;
    let mut p = Projector {
        program,
        trace: RuleTrace::new(),
        site: 0,
        used: collect_identifiers(program),
        called: BTreeSet::new(),
    };

    let setup = chor
        .endpoints
        .iter()
        .map(|ep| match ep {
            EndpointDecl::Singular { name, class, args, .. } => SetupStmt::Singular {
                name: name.clone(),
                class: class.clone(),
                args: args.clone(),
            },
            EndpointDecl::Family { name, binder, size, class, args, .. } => SetupStmt::Family {
                name: name.clone(),
                binder: binder.clone(),
                size: size.clone(),
                class: class.clone(),
                args: args.clone(),
            },
        })
        .collect();

    let mut body = Vec::new();
    for e in &chor.contract.requires {
        let r = p.resource(e)?;
        body.push(assert(CheckKind::ContractPre, "chor-pre", r));
    }
    for e in &chor.run.contract.requires {
        let r = p.resource(e)?;
        body.push(assert(CheckKind::ContractPre, "run-pre", r));
    }
    body.extend(p.stmts(&chor.run.body)?);
    for e in &chor.run.contract.ensures {
        let r = p.resource(e)?;
        body.push(assert(CheckKind::ContractPost, "run-post", r));
    }
    for e in &chor.contract.ensures {
        let r = p.resource(e)?;
        body.push(assert(CheckKind::ContractPost, "chor-post", r));
    }

    let vp = VerificationProgram {
        name: chor.name.clone(),
        params: chor.params.clone(),
        setup,
        body,
        called_methods: p.close_called_methods(),
    };
    Ok((vp, p.trace))
}

/// True when no choreography-level node (`\endpoint`, `\chor`, `\msg`,
/// `\sender`, `\receiver`) survives anywhere in the projected program — the
/// output invariant of [`project_chor`].
pub fn fully_instantiated(vp: &VerificationProgram) -> bool {
    let mut clean = true;
    let mut check = |e: &Expr| {
        e.walk(&mut |n| {
            if matches!(
                n.kind,
                ExprKind::EndpointExpr { .. }
                    | ExprKind::ChorExpr { .. }
                    | ExprKind::Msg
                    | ExprKind::Sender
                    | ExprKind::Receiver
            ) {
                clean = false;
            }
        })
    };
    for s in &vp.setup {
        match s {
            SetupStmt::Singular { args, .. } => args.iter().for_each(&mut check),
            SetupStmt::Family { size, args, .. } => {
                check(size);
                args.iter().for_each(&mut check);
            }
        }
    }
    walk_vstmts(&vp.body, &mut check);
    clean
}

fn walk_vstmts(stmts: &[VStmt], check: &mut impl FnMut(&Expr)) {
    for s in stmts {
        match s {
            VStmt::Let { value, .. } => check(value),
            VStmt::Assign { dest, value } => {
                check(dest);
                check(value);
            }
            VStmt::Assert { expr, .. } => check(expr),
            VStmt::Exhale { resource, .. } | VStmt::Inhale { resource, .. } => check(resource),
            VStmt::If { cond, then_branch, else_branch } => {
                check(cond);
                walk_vstmts(then_branch, check);
                walk_vstmts(else_branch, check);
            }
            VStmt::While { invariants, cond, body } => {
                invariants.iter().for_each(&mut *check);
                check(cond);
                walk_vstmts(body, check);
            }
            VStmt::MethodCall { recv, args, .. } => {
                check(recv);
                args.iter().for_each(&mut *check);
            }
            VStmt::Par { lo, hi, requires, ensures, body, .. } => {
                check(lo);
                check(hi);
                check(requires);
                check(ensures);
                walk_vstmts(body, check);
            }
            VStmt::Confined { body, .. } => walk_vstmts(body, check),
        }
    }
}

fn assert(check: CheckKind, label: &str, expr: Expr) -> VStmt {
    VStmt::Assert { check, label: label.to_string(), expr }
}

/// One conjunct of a branch/loop condition: where it holds, and what holds.
struct Conjunct<'e> {
    target: &'e EndpointTarget,
    body: &'e Expr,
    span: Span,
}

struct Projector<'a> {
    program: &'a Program,
    trace: RuleTrace,
    /// Communication site counter (pre-order over the run body); must match
    /// the numbering used for the endpoint channel table.
    site: usize,
    /// Every identifier occurring in the program; fresh names are drawn
    /// against this set and recorded into it, so naming is deterministic.
    used: BTreeSet<String>,
    /// Directly called `(class, method)` pairs.
    called: BTreeSet<(String, String)>,
}

impl<'a> Projector<'a> {
    fn fresh(&mut self, base: &str) -> String {
        let name = fresh_name(base, &self.used);
        self.used.insert(name.clone());
        name
    }

    fn class_of_sort(&self, sort: &str) -> Option<&'a str> {
        self.program
            .choreography()
            .and_then(|c| c.endpoint(sort))
            .map(|ep| ep.class())
    }

    fn stmts(&mut self, body: &[ChorStmt]) -> Result<Vec<VStmt>, ProjectError> {
        let mut out = Vec::new();
        for s in body {
            out.extend(self.stmt(s)?);
        }
        Ok(out)
    }

    fn stmt(&mut self, s: &ChorStmt) -> Result<Vec<VStmt>, ProjectError> {
        match &s.kind {
            ChorStmtKind::Assert { expr } => {
                let r = self.resource(expr)?;
                Ok(vec![assert(CheckKind::Plain, "", r)])
            }
            ChorStmtKind::If { cond, then_branch, else_branch } => {
                self.trace.record(Rule::CpIf);
                let unan = self.unanimous(cond, s.span)?;
                let cond = self.condition(cond, s.span)?;
                let then_branch = self.stmts(then_branch)?;
                let else_branch = self.stmts(else_branch)?;
                Ok(vec![
                    assert(CheckKind::Unanimity, "if-condition", unan),
                    VStmt::If { cond, then_branch, else_branch },
                ])
            }
            ChorStmtKind::While { invariants, cond, body } => {
                self.trace.record(Rule::CpWhile);
                let unan = self.unanimous(cond, s.span)?;
                let cond_p = self.condition(cond, s.span)?;
                let invariants = invariants
                    .iter()
                    .map(|inv| self.resource(inv))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut loop_body = self.stmts(body)?;
                // Deadlock-freedom for loops: every iteration re-agrees on
                // the condition before it is re-evaluated.
                loop_body.push(assert(CheckKind::Unanimity, "while-condition", unan.clone()));
                Ok(vec![
                    assert(CheckKind::Unanimity, "while-condition", unan),
                    VStmt::While { invariants, cond: cond_p, body: loop_body },
                ])
            }
            ChorStmtKind::Endpoint { target, action } => self.endpoint_stmt(target, action, s.span),
            ChorStmtKind::Communicate { invariant, sender, msg, receiver, dest } => {
                let site = self.site;
                self.site += 1;
                match sender {
                    EndpointTarget::FamilyRange { .. } => {
                        self.comm_range(site, invariant, sender, msg, receiver, dest, s.span)
                    }
                    _ => self.comm(site, invariant, sender, msg, receiver, dest, s.span),
                }
            }
        }
    }

    fn endpoint_stmt(
        &mut self,
        target: &EndpointTarget,
        action: &EpAction,
        span: Span,
    ) -> Result<Vec<VStmt>, ProjectError> {
        match (InstanceRef::from_target(target), action) {
            (Some(inst), EpAction::Assign { dest, value }) => {
                self.trace.record(Rule::CpAssign);
                Ok(vec![VStmt::Confined {
                    target: inst,
                    body: vec![VStmt::Assign { dest: dest.clone(), value: value.clone() }],
                }])
            }
            (Some(inst), EpAction::Call { recv, method, args }) => {
                self.trace.record(Rule::CpMethodCall);
                self.register_call(&inst.sort, method, span)?;
                Ok(vec![VStmt::Confined {
                    target: inst,
                    body: vec![VStmt::MethodCall {
                        recv: recv.clone(),
                        method: method.clone(),
                        args: args.clone(),
                    }],
                }])
            }
            (None, EpAction::Assign { .. }) => Err(unsupported(
                span,
                "assignment across a family range has no projection; define a method on the \
                 endpoint class that writes the field and call it over the range",
            )),
            (None, EpAction::Call { recv, method, args }) => {
                self.method_call_range(target, recv, method, args, span)
            }
        }
    }

    fn register_call(&mut self, sort: &str, method: &str, span: Span) -> Result<String, ProjectError> {
        let class = self.class_of_sort(sort).ok_or_else(|| ProjectError::Unresolved {
            span,
            msg: format!("unknown endpoint `{sort}`"),
        })?;
        let cd = self.program.class(class).ok_or_else(|| ProjectError::Unresolved {
            span,
            msg: format!("unknown class `{class}`"),
        })?;
        if cd.method(method).is_none() {
            return Err(ProjectError::Unresolved {
                span,
                msg: format!("class `{class}` has no method `{method}`"),
            });
        }
        self.called.insert((class.to_string(), method.to_string()));
        Ok(class.to_string())
    }

    /// `endpoint F[i := lo .. hi]: F[i].m(args)` → a `par` block over the
    /// range whose iteration contract is `m`'s contract at `F[i]`.
    fn method_call_range(
        &mut self,
        target: &EndpointTarget,
        recv: &Expr,
        method: &str,
        args: &[Expr],
        span: Span,
    ) -> Result<Vec<VStmt>, ProjectError> {
        let EndpointTarget::FamilyRange { family, binder, lo, hi } = target else {
            unreachable!("caller checked the target is a range");
        };
        self.trace.record(Rule::CpMethodCallRange);
        let member = indexed_member(family, binder);
        if recv != &member {
            return Err(unsupported(
                span,
                format!(
                    "the receiver of a ranged call must be the ranged member itself \
                     (`{family}[{binder}]`); other receivers make the iteration footprint \
                     unpredictable"
                ),
            ));
        }
        for a in args {
            if a.level() > PurityLevel::Pure {
                return Err(unsupported(
                    span,
                    "arguments of a ranged call must be pure expressions",
                ));
            }
        }
        let class = self.register_call(family, method, span)?;
        let callee = CalleeRef::Method { class, method: method.to_string() };
        let pre = self
            .program
            .contract_pre(&callee, &member)
            .map_err(|msg| ProjectError::Unresolved { span, msg })?;
        let post = self
            .program
            .contract_post(&callee, &member)
            .map_err(|msg| ProjectError::Unresolved { span, msg })?;
        let params = self
            .program
            .class(callee_class(&callee))
            .and_then(|c| c.method(method))
            .map(|m| m.params.clone())
            .unwrap_or_default();
        let requires = self.subst_params(&pre, &params, args);
        let ensures = self.subst_params(&post, &params, args);

        let body = vec![VStmt::Confined {
            target: InstanceRef::indexed(family.clone(), Expr::var(binder.clone())),
            body: vec![VStmt::MethodCall {
                recv: recv.clone(),
                method: method.to_string(),
                args: args.to_vec(),
            }],
        }];
        Ok(vec![VStmt::Par {
            binder: binder.clone(),
            lo: (**lo).clone(),
            hi: (**hi).clone(),
            requires,
            ensures,
            body,
        }])
    }

    /// Simultaneous, capture-avoiding `params := args`: stage through fresh
    /// intermediates so an argument mentioning another parameter's name is
    /// not rewritten twice.
    fn subst_params(&mut self, expr: &Expr, params: &[Param], args: &[Expr]) -> Expr {
        debug_assert_eq!(params.len(), args.len());
        let mut staged = expr.clone();
        let mut temps = Vec::new();
        for p in params {
            let t = self.fresh(&format!("_{}", p.name));
            staged = subst_var(&staged, &p.name, &Expr::var(t.clone()));
            temps.push(t);
        }
        for (t, a) in temps.iter().zip(args) {
            staged = subst_var(&staged, t, a);
        }
        staged
    }

    /// `communicate r: msg -> p: dest` (both ends single instances).
    #[allow(clippy::too_many_arguments)]
    fn comm(
        &mut self,
        site: usize,
        invariant: &Option<Expr>,
        sender: &EndpointTarget,
        msg: &Expr,
        receiver: &EndpointTarget,
        dest: &Expr,
        span: Span,
    ) -> Result<Vec<VStmt>, ProjectError> {
        self.trace.record(Rule::CpComm);
        let (s_ref, r_ref) = match (InstanceRef::from_target(sender), InstanceRef::from_target(receiver))
        {
            (Some(s), Some(r)) => (s, r),
            _ => {
                return Err(unsupported(
                    span,
                    "only the sender of a communication can range over a family",
                ))
            }
        };
        let v = self.fresh("v");
        let inv = invariant.clone().unwrap_or_else(|| Expr::bool(true));
        let instantiated = subst_placeholders(
            &inv,
            &Expr::var(v.clone()),
            &target_to_expr(sender),
            &target_to_expr(receiver),
        );
        let chan = ChannelUse { site, sender: s_ref.clone(), receiver: r_ref.clone() };
        Ok(vec![
            VStmt::Let { name: v.clone(), at: s_ref.clone(), value: msg.clone() },
            VStmt::Exhale { at: s_ref, chan: Some(chan.clone()), resource: instantiated.clone() },
            VStmt::Inhale { at: r_ref.clone(), chan: Some(chan), resource: instantiated },
            VStmt::Confined {
                target: r_ref,
                body: vec![VStmt::Assign { dest: dest.clone(), value: Expr::var(v) }],
            },
        ])
    }

    /// `communicate F[i := lo .. hi]: F[i].f -> G[d(i)]: G[d(i)].g`:
    /// assert the receiver map `d` is injective on the range, then transfer
    /// member-wise inside a `par` block.
    #[allow(clippy::too_many_arguments)]
    fn comm_range(
        &mut self,
        site: usize,
        invariant: &Option<Expr>,
        sender: &EndpointTarget,
        msg: &Expr,
        receiver: &EndpointTarget,
        dest: &Expr,
        span: Span,
    ) -> Result<Vec<VStmt>, ProjectError> {
        self.trace.record(Rule::CpCommRange);
        let EndpointTarget::FamilyRange { family, binder, lo, hi } = sender else {
            unreachable!("caller checked the sender is a range");
        };
        let EndpointTarget::FamilyIndex { family: recv_family, index: d } = receiver else {
            return Err(unsupported(
                span,
                "a ranged sender needs an indexed family member as receiver",
            ));
        };

        // Restricted shapes keep the iteration footprint (and therefore the
        // auto-generated `par` contract) exact.
        let msg_field = match &msg.kind {
            ExprKind::FieldAccess { base, field } if **base == indexed_member(family, binder) => {
                field.clone()
            }
            _ => {
                return Err(unsupported(
                    span,
                    format!(
                        "a ranged communication sends a field of the ranged member \
                         (`{family}[{binder}].field`)"
                    ),
                ))
            }
        };
        match &dest.kind {
            ExprKind::FieldAccess { base, field } => {
                let expected = Expr::synth(ExprKind::SeqIndex {
                    base: Box::new(Expr::var(recv_family.clone())),
                    index: d.clone(),
                });
                if **base != expected {
                    return Err(unsupported(
                        span,
                        format!(
                            "a ranged communication writes a field of the indexed receiver \
                             (`{recv_family}[index].field` with the receiver's own index)"
                        ),
                    ));
                }
                field
            }
            _ => {
                return Err(unsupported(
                    span,
                    "the destination of a communication is a field location",
                ))
            }
        };

        // (1) Injectivity of the receiver index map on the sender range.
        let i1 = self.fresh("i");
        let i2 = self.fresh("i");
        let d_at = |j: &str| subst_var(d, binder, &Expr::var(j));
        let inj_body = Expr::bin(
            BinOp::Implies,
            Expr::bin(BinOp::Ne, Expr::var(i1.clone()), Expr::var(i2.clone())),
            Expr::bin(BinOp::Ne, d_at(&i1), d_at(&i2)),
        );
        let injective = forall(&i1, lo, hi, forall(&i2, lo, hi, inj_body));

        // (2) Per-member transfer inside a par block.
        let s_ref = InstanceRef::indexed(family.clone(), Expr::var(binder.clone()));
        let r_ref = InstanceRef::indexed(recv_family.clone(), (**d).clone());
        let v = self.fresh("v");
        let inv = invariant.clone().unwrap_or_else(|| Expr::bool(true));
        let instantiated = subst_placeholders(
            &inv,
            &Expr::var(v.clone()),
            &indexed_member(family, binder),
            &Expr::synth(ExprKind::SeqIndex {
                base: Box::new(Expr::var(recv_family.clone())),
                index: d.clone(),
            }),
        );
        let chan = ChannelUse { site, sender: s_ref.clone(), receiver: r_ref.clone() };
        let steps = vec![
            VStmt::Let { name: v.clone(), at: s_ref.clone(), value: msg.clone() },
            VStmt::Exhale {
                at: s_ref.clone(),
                chan: Some(chan.clone()),
                resource: instantiated.clone(),
            },
            VStmt::Inhale { at: r_ref.clone(), chan: Some(chan), resource: instantiated },
            VStmt::Confined {
                target: r_ref,
                body: vec![VStmt::Assign { dest: dest.clone(), value: Expr::var(v) }],
            },
        ];
        // Iteration contract: read half of the sent field, full write on the
        // destination field — exactly the per-member footprint.
        let _ = msg_field; // field names documented by the Perm expressions below
        let perm = Expr::sep(
            Expr::synth(ExprKind::Perm {
                place: Box::new(msg.clone()),
                amount: Box::new(Expr::synth(ExprKind::FracLit { num: 1.into(), den: 2.into() })),
            }),
            Expr::synth(ExprKind::Perm {
                place: Box::new(dest.clone()),
                amount: Box::new(Expr::int(1)),
            }),
        );
        Ok(vec![
            assert(CheckKind::Injectivity, "receiver-map", injective),
            VStmt::Par {
                binder: binder.clone(),
                lo: (**lo).clone(),
                hi: (**hi).clone(),
                requires: perm.clone(),
                ensures: perm,
                body: steps,
            },
        ])
    }

    // ----- conditions, resources, unanimity -------------------------------

    /// Branch/loop condition, evaluated by the verification program itself:
    /// each `\endpoint` conjunct becomes a confined evaluation (ranges via
    /// bounded `forall` over confined members).
    fn condition(&mut self, cond: &Expr, span: Span) -> Result<Expr, ProjectError> {
        let conjuncts = split_condition(cond, span)?;
        let mut out = Vec::new();
        for c in &conjuncts {
            out.push(self.project_conjunct(c)?);
        }
        Ok(Expr::and_all(out))
    }

    fn project_conjunct(&mut self, c: &Conjunct<'_>) -> Result<Expr, ProjectError> {
        self.no_nested_forms(c.body, c.span)?;
        match c.target {
            EndpointTarget::Singular { .. } | EndpointTarget::FamilyIndex { .. } => {
                self.trace.record(Rule::CpExpr);
                let inst = InstanceRef::from_target(c.target).expect("instance target");
                Ok(confined(inst, c.body.clone()))
            }
            EndpointTarget::FamilyRange { family, binder, lo, hi } => {
                self.trace.record(Rule::CpExprRange);
                let member = InstanceRef::indexed(family.clone(), Expr::var(binder.clone()));
                Ok(forall(binder, lo, hi, confined(member, c.body.clone())))
            }
        }
    }

    /// A conjunct as seen from one concrete instance `at` — the building
    /// block of unanimity views. Conjuncts of another sort contribute `true`;
    /// an indexed or ranged conjunct of the same sort contributes its body
    /// under an index guard.
    fn view_conjunct(&mut self, c: &Conjunct<'_>, at: &InstanceRef) -> Expr {
        if c.target.sort().0 != at.sort {
            self.trace.record(Rule::CpExprSkip);
            return Expr::bool(true);
        }
        match c.target {
            EndpointTarget::Singular { .. } => {
                self.trace.record(Rule::CpExpr);
                confined(at.clone(), c.body.clone())
            }
            EndpointTarget::FamilyIndex { index, .. } => {
                self.trace.record(Rule::CpExprIndex);
                let j = at.index.clone().expect("indexed instance of a family sort");
                Expr::bin(
                    BinOp::Implies,
                    Expr::bin(BinOp::Eq, j, (**index).clone()),
                    confined(at.clone(), c.body.clone()),
                )
            }
            EndpointTarget::FamilyRange { binder, lo, hi, .. } => {
                self.trace.record(Rule::CpExprIndex);
                let j = at.index.clone().expect("indexed instance of a family sort");
                let in_range = Expr::and(
                    Expr::bin(BinOp::Le, (**lo).clone(), j.clone()),
                    Expr::bin(BinOp::Lt, j.clone(), (**hi).clone()),
                );
                let body_at_j = subst_var(c.body, binder, &j);
                Expr::bin(BinOp::Implies, in_range, confined(at.clone(), body_at_j))
            }
        }
    }

    /// The deadlock-freedom check for a branch/loop condition: every pair of
    /// participating instances evaluates the condition to the same value.
    /// Views of family members are quantified over the member index.
    fn unanimous(&mut self, cond: &Expr, span: Span) -> Result<Expr, ProjectError> {
        let conjuncts = split_condition(cond, span)?;

        enum Desc {
            Inst(InstanceRef),
            Range { family: String, lo: Expr, hi: Expr },
        }
        let descs: Vec<Desc> = conjuncts
            .iter()
            .map(|c| match c.target {
                EndpointTarget::FamilyRange { family, lo, hi, .. } => Desc::Range {
                    family: family.clone(),
                    lo: (**lo).clone(),
                    hi: (**hi).clone(),
                },
                t => Desc::Inst(InstanceRef::from_target(t).expect("instance target")),
            })
            .collect();

        let view = |p: &mut Self, at: &InstanceRef| -> Expr {
            Expr::and_all(conjuncts.iter().map(|c| p.view_conjunct(c, at)).collect())
        };

        let mut pairs = Vec::new();
        // Internal agreement of each ranged conjunct: any two members of the
        // range see the condition alike.
        for d in &descs {
            if let Desc::Range { family, lo, hi } = d {
                let j1 = self.fresh("j");
                let j2 = self.fresh("j");
                let v1 = view(self, &InstanceRef::indexed(family.clone(), Expr::var(j1.clone())));
                let v2 = view(self, &InstanceRef::indexed(family.clone(), Expr::var(j2.clone())));
                pairs.push(forall(
                    &j1,
                    lo,
                    hi,
                    forall(&j2, lo, hi, Expr::bin(BinOp::Eq, v1, v2)),
                ));
            }
        }
        // Pairwise agreement across distinct conjunct targets.
        for a in 0..descs.len() {
            for b in a + 1..descs.len() {
                let pair = match (&descs[a], &descs[b]) {
                    (Desc::Inst(t1), Desc::Inst(t2)) => {
                        let v1 = view(self, t1);
                        let v2 = view(self, t2);
                        Expr::bin(BinOp::Eq, v1, v2)
                    }
                    (Desc::Inst(t1), Desc::Range { family, lo, hi })
                    | (Desc::Range { family, lo, hi }, Desc::Inst(t1)) => {
                        let j = self.fresh("j");
                        let v1 = view(self, t1);
                        let v2 =
                            view(self, &InstanceRef::indexed(family.clone(), Expr::var(j.clone())));
                        forall(&j, lo, hi, Expr::bin(BinOp::Eq, v1, v2))
                    }
                    (
                        Desc::Range { family: f1, lo: lo1, hi: hi1 },
                        Desc::Range { family: f2, lo: lo2, hi: hi2 },
                    ) => {
                        let j1 = self.fresh("j");
                        let j2 = self.fresh("j");
                        let v1 = view(self, &InstanceRef::indexed(f1.clone(), Expr::var(j1.clone())));
                        let v2 = view(self, &InstanceRef::indexed(f2.clone(), Expr::var(j2.clone())));
                        forall(
                            &j1,
                            lo1,
                            hi1,
                            forall(&j2, lo2, hi2, Expr::bin(BinOp::Eq, v1, v2)),
                        )
                    }
                };
                pairs.push(pair);
            }
        }
        Ok(Expr::sep_all(pairs))
    }

    /// Assert / invariant / contract position: `\endpoint` conjuncts become
    /// confined evaluations, `\chor` bodies are included verbatim (this is
    /// the global program — the one place they mean something).
    fn resource(&mut self, r: &Expr) -> Result<Expr, ProjectError> {
        match &r.kind {
            ExprKind::BinOp { op: BinOp::And, lhs, rhs } => {
                let l = self.resource(lhs)?;
                let rr = self.resource(rhs)?;
                Ok(Expr::and(l, rr))
            }
            ExprKind::SepConj { lhs, rhs } => {
                let l = self.resource(lhs)?;
                let rr = self.resource(rhs)?;
                Ok(Expr::sep(l, rr))
            }
            ExprKind::BinOp { op: BinOp::Implies, lhs, rhs } => {
                let rr = self.resource(rhs)?;
                if rr.is_true() {
                    Ok(Expr::bool(true))
                } else {
                    Ok(Expr::bin(BinOp::Implies, (**lhs).clone(), rr))
                }
            }
            ExprKind::EndpointExpr { target, body } => {
                let c = Conjunct { target, body, span: r.span };
                self.project_conjunct(&c)
            }
            ExprKind::ChorExpr { body } => Ok((**body).clone()),
            ExprKind::QuantPerm { .. } => Err(unsupported(
                r.span,
                "quantified permissions have no projection; use a ranged `\\endpoint` form",
            )),
            _ => Ok(r.clone()),
        }
    }

    fn no_nested_forms(&self, e: &Expr, span: Span) -> Result<(), ProjectError> {
        let mut nested = false;
        e.walk(&mut |n| {
            if matches!(n.kind, ExprKind::EndpointExpr { .. } | ExprKind::ChorExpr { .. }) {
                nested = true;
            }
        });
        if nested {
            Err(unsupported(span, "nested `\\endpoint`/`\\chor` expressions are not supported"))
        } else {
            Ok(())
        }
    }

    /// Close `called` over bodies: a method reached from an endpoint
    /// statement may call sibling methods on `this`.
    fn close_called_methods(&self) -> BTreeSet<(String, String)> {
        let mut out = self.called.clone();
        let mut queue: Vec<(String, String)> = out.iter().cloned().collect();
        while let Some((class, method)) = queue.pop() {
            let Some(m) = self.program.class(&class).and_then(|c| c.method(&method)) else {
                continue;
            };
            collect_this_calls(&m.body, &class, &mut |c, m| {
                let key = (c.to_string(), m.to_string());
                if out.insert(key.clone()) {
                    queue.push(key);
                }
            });
        }
        out
    }
}

fn callee_class(c: &CalleeRef) -> &str {
    match c {
        CalleeRef::Method { class, .. } => class,
        CalleeRef::Constructor { class } => class,
    }
}

fn collect_this_calls(
    body: &[MethodStmt],
    class: &str,
    f: &mut impl FnMut(&str, &str),
) {
    for s in body {
        match &s.kind {
            MethodStmtKind::Call { recv, method, .. } => {
                if matches!(recv.kind, ExprKind::This) {
                    f(class, method);
                }
            }
            MethodStmtKind::If { then_branch, else_branch, .. } => {
                collect_this_calls(then_branch, class, f);
                collect_this_calls(else_branch, class, f);
            }
            MethodStmtKind::While { body, .. } | MethodStmtKind::Par { body, .. } => {
                collect_this_calls(body, class, f);
            }
            _ => {}
        }
    }
}

fn indexed_member(family: &str, binder: &str) -> Expr {
    Expr::synth(ExprKind::SeqIndex {
        base: Box::new(Expr::var(family.to_string())),
        index: Box::new(Expr::var(binder.to_string())),
    })
}

fn confined(inst: InstanceRef, body: Expr) -> Expr {
    Expr::synth(ExprKind::Confined { target: inst.to_confine(), body: Box::new(body) })
}

fn forall(binder: &str, lo: &Expr, hi: &Expr, body: Expr) -> Expr {
    Expr::synth(ExprKind::Forall {
        binder: binder.to_string(),
        lo: Box::new(lo.clone()),
        hi: Box::new(hi.clone()),
        body: Box::new(body),
    })
}

/// Split a branch/loop condition into its `\endpoint` conjuncts.
fn split_condition<'e>(cond: &'e Expr, span: Span) -> Result<Vec<Conjunct<'e>>, ProjectError> {
    let mut flat = Vec::new();
    flatten_and(cond, &mut flat);
    flat.into_iter()
        .map(|e| match &e.kind {
            ExprKind::EndpointExpr { target, body } => {
                Ok(Conjunct { target, body, span: e.span })
            }
            _ => Err(unsupported(
                if e.span == Span::default() { span } else { e.span },
                "branch and loop conditions are `&&`-lists of `(\\endpoint ...; ...)` \
                 expressions",
            )),
        })
        .collect()
}

fn flatten_and<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match &e.kind {
        ExprKind::BinOp { op: BinOp::And, lhs, rhs } => {
            flatten_and(lhs, out);
            flatten_and(rhs, out);
        }
        _ => out.push(e),
    }
}

/// Every identifier that occurs anywhere in the program; the pool fresh
/// names must avoid.
pub(crate) fn collect_identifiers(program: &Program) -> BTreeSet<String> {
    let mut used = BTreeSet::new();
    let from_expr = |e: &Expr, used: &mut BTreeSet<String>| {
        e.walk(&mut |n| match &n.kind {
            ExprKind::Var { name } => {
                used.insert(name.clone());
            }
            ExprKind::Forall { binder, .. } | ExprKind::QuantPerm { binder, .. } => {
                used.insert(binder.clone());
            }
            ExprKind::EndpointExpr {
                target: EndpointTarget::FamilyRange { binder, .. }, ..
            } => {
                used.insert(binder.clone());
            }
            _ => {}
        });
    };
    for d in &program.decls {
        match d {
            Decl::Class(c) => {
                used.insert(c.name.clone());
                for m in &c.methods {
                    for p in &m.params {
                        used.insert(p.name.clone());
                    }
                    collect_stmt_idents(&m.body, &mut used);
                }
                if let Some(ct) = &c.ctor {
                    for p in &ct.params {
                        used.insert(p.name.clone());
                    }
                    collect_stmt_idents(&ct.body, &mut used);
                }
            }
            Decl::Predicate(p) => {
                used.insert(p.name.clone());
                for q in &p.params {
                    used.insert(q.name.clone());
                }
                from_expr(&p.body, &mut used);
            }
            Decl::Function(f) => {
                used.insert(f.name.clone());
                for q in &f.params {
                    used.insert(q.name.clone());
                }
                from_expr(&f.body, &mut used);
            }
            Decl::Choreography(c) => {
                used.insert(c.name.clone());
                for p in &c.params {
                    used.insert(p.name.clone());
                }
                for ep in &c.endpoints {
                    used.insert(ep.name().to_string());
                    if let EndpointDecl::Family { binder, .. } = ep {
                        used.insert(binder.clone());
                    }
                }
                collect_chor_idents(&c.run.body, &mut used);
                for e in c
                    .contract
                    .requires
                    .iter()
                    .chain(&c.contract.ensures)
                    .chain(&c.run.contract.requires)
                    .chain(&c.run.contract.ensures)
                {
                    from_expr(e, &mut used);
                }
            }
        }
    }
    used
}

fn collect_expr_idents(e: &Expr, used: &mut BTreeSet<String>) {
    e.walk(&mut |n| match &n.kind {
        ExprKind::Var { name } => {
            used.insert(name.clone());
        }
        ExprKind::Forall { binder, .. } | ExprKind::QuantPerm { binder, .. } => {
            used.insert(binder.clone());
        }
        ExprKind::EndpointExpr { target: EndpointTarget::FamilyRange { binder, .. }, .. } => {
            used.insert(binder.clone());
        }
        _ => {}
    });
}

fn collect_stmt_idents(body: &[MethodStmt], used: &mut BTreeSet<String>) {
    for s in body {
        match &s.kind {
            MethodStmtKind::Assert { expr }
            | MethodStmtKind::Inhale { expr }
            | MethodStmtKind::Exhale { expr } => collect_expr_idents(expr, used),
            MethodStmtKind::Assign { dest, value } => {
                collect_expr_idents(dest, used);
                collect_expr_idents(value, used);
            }
            MethodStmtKind::Call { recv, args, .. } => {
                collect_expr_idents(recv, used);
                for a in args {
                    collect_expr_idents(a, used);
                }
            }
            MethodStmtKind::If { cond, then_branch, else_branch } => {
                collect_expr_idents(cond, used);
                collect_stmt_idents(then_branch, used);
                collect_stmt_idents(else_branch, used);
            }
            MethodStmtKind::While { invariants, cond, body } => {
                for i in invariants {
                    collect_expr_idents(i, used);
                }
                collect_expr_idents(cond, used);
                collect_stmt_idents(body, used);
            }
            MethodStmtKind::Par { contract, binder, lo, hi, body, .. } => {
                used.insert(binder.clone());
                for e in contract.requires.iter().chain(&contract.ensures) {
                    collect_expr_idents(e, used);
                }
                collect_expr_idents(lo, used);
                collect_expr_idents(hi, used);
                collect_stmt_idents(body, used);
            }
        }
    }
}

fn collect_chor_idents(body: &[ChorStmt], used: &mut BTreeSet<String>) {
    let target = |t: &EndpointTarget, used: &mut BTreeSet<String>| match t {
        EndpointTarget::Singular { .. } => {}
        EndpointTarget::FamilyIndex { index, .. } => collect_expr_idents(index, used),
        EndpointTarget::FamilyRange { binder, lo, hi, .. } => {
            used.insert(binder.clone());
            collect_expr_idents(lo, used);
            collect_expr_idents(hi, used);
        }
    };
    for s in body {
        match &s.kind {
            ChorStmtKind::If { cond, then_branch, else_branch } => {
                collect_expr_idents(cond, used);
                collect_chor_idents(then_branch, used);
                collect_chor_idents(else_branch, used);
            }
            ChorStmtKind::While { invariants, cond, body } => {
                for i in invariants {
                    collect_expr_idents(i, used);
                }
                collect_expr_idents(cond, used);
                collect_chor_idents(body, used);
            }
            ChorStmtKind::Assert { expr } => collect_expr_idents(expr, used),
            ChorStmtKind::Endpoint { target: t, action } => {
                target(t, used);
                match action {
                    EpAction::Assign { dest, value } => {
                        collect_expr_idents(dest, used);
                        collect_expr_idents(value, used);
                    }
                    EpAction::Call { recv, args, .. } => {
                        collect_expr_idents(recv, used);
                        for a in args {
                            collect_expr_idents(a, used);
                        }
                    }
                }
            }
            ChorStmtKind::Communicate { invariant, sender, msg, receiver, dest } => {
                if let Some(i) = invariant {
                    collect_expr_idents(i, used);
                }
                target(sender, used);
                target(receiver, used);
                collect_expr_idents(msg, used);
                collect_expr_idents(dest, used);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;
    use crate::frontend::pretty::expr_to_string;

    fn project(src: &str) -> (VerificationProgram, RuleTrace) {
        let p = parse(src).expect("parse");
        let diags = crate::wellformed::check_wellformed(&p);
        assert!(crate::diag::is_clean(&diags), "{diags:?}");
        project_chor(&p).expect("project")
    }

    fn project_err(src: &str) -> ProjectError {
        let p = parse(src).expect("parse");
        project_chor(&p).expect_err("projection should fail")
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

    fn with_header(body: &str) -> String {
        format!("{HEADER}\nchoreography T(int n) {{\n{body}\n}}\n")
    }

    #[test]
    fn assignment_is_confined_to_its_target() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  run {
    endpoint a: a.x := 1;
  }
"#,
        );
        let (vp, trace) = project(&src);
        assert_eq!(vp.setup.len(), 1);
        assert_eq!(vp.body.len(), 1);
        match &vp.body[0] {
            VStmt::Confined { target, body } => {
                assert_eq!(target, &InstanceRef::singular("a"));
                assert!(matches!(body[0], VStmt::Assign { .. }));
            }
            other => panic!("expected a confined assignment, got {other:?}"),
        }
        assert!(trace.contains(Rule::CpAssign));
    }

    #[test]
    fn empty_run_body_projects_to_setup_only() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  run {
  }
"#,
        );
        let (vp, _) = project(&src);
        assert_eq!(vp.setup.len(), 1);
        assert!(vp.body.is_empty());
    }

    #[test]
    fn ranged_assignment_is_rejected_with_guidance() {
        let src = with_header(
            r#"
  endpoint F[i := 0 .. n] = Cell(0);
  run {
    endpoint F[i := 0 .. n]: F[i].x := 1;
  }
"#,
        );
        match project_err(&src) {
            ProjectError::UnsupportedSyntax { msg, .. } => {
                assert!(msg.contains("define a method"), "{msg}");
            }
            other => panic!("expected unsupported syntax, got {other:?}"),
        }
    }

    #[test]
    fn communication_emits_let_exhale_inhale_write() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  endpoint b = Cell(0);
  run {
    channel_invariant \msg >= 0;
    communicate a: a.x -> b: b.y;
  }
"#,
        );
        let (vp, trace) = project(&src);
        assert!(trace.contains(Rule::CpComm));
        assert_eq!(vp.body.len(), 4);
        let VStmt::Let { name, at, .. } = &vp.body[0] else { panic!("expected let") };
        assert_eq!(at, &InstanceRef::singular("a"));
        let VStmt::Exhale { at: ex_at, chan, resource } = &vp.body[1] else {
            panic!("expected exhale")
        };
        assert_eq!(ex_at, &InstanceRef::singular("a"));
        assert_eq!(chan.as_ref().unwrap().site, 0);
        // The invariant is fully instantiated: `\msg` became the let-bound
        // message variable.
        assert_eq!(expr_to_string(resource), format!("{name} >= 0"));
        let VStmt::Inhale { at: in_at, resource: in_res, .. } = &vp.body[2] else {
            panic!("expected inhale")
        };
        assert_eq!(in_at, &InstanceRef::singular("b"));
        assert_eq!(in_res, resource);
        assert!(matches!(&vp.body[3], VStmt::Confined { target, .. }
            if target == &InstanceRef::singular("b")));
        assert!(fully_instantiated(&vp));
    }

    #[test]
    fn omitted_channel_invariant_defaults_to_true() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  endpoint b = Cell(0);
  run {
    communicate a: a.x -> b: b.y;
  }
"#,
        );
        let (vp, _) = project(&src);
        let VStmt::Exhale { resource, .. } = &vp.body[1] else { panic!("expected exhale") };
        assert!(resource.is_true());
    }

    #[test]
    fn ranged_communication_asserts_injectivity_then_pars() {
        let src = with_header(
            r#"
  endpoint F[i := 0 .. n] = Cell(0);
  endpoint G[i := 0 .. n + 1] = Cell(0);
  run {
    communicate F[i := 0 .. n]: F[i].x -> G[i + 1]: G[i + 1].y;
  }
"#,
        );
        let (vp, trace) = project(&src);
        assert!(trace.contains(Rule::CpCommRange));
        assert_eq!(vp.body.len(), 2);
        let VStmt::Assert { check, expr, .. } = &vp.body[0] else { panic!("expected assert") };
        assert_eq!(*check, CheckKind::Injectivity);
        let text = expr_to_string(expr);
        assert!(text.contains("!="), "{text}");
        let VStmt::Par { binder, body, requires, .. } = &vp.body[1] else {
            panic!("expected par")
        };
        assert_eq!(binder, "i");
        assert_eq!(body.len(), 4);
        let req = expr_to_string(requires);
        assert_eq!(req, "Perm(F[i].x, 1\\2) ** Perm(G[i + 1].y, 1)");
        assert!(fully_instantiated(&vp));
    }

    #[test]
    fn ranged_communication_requires_field_shapes() {
        let src = with_header(
            r#"
  endpoint F[i := 0 .. n] = Cell(0);
  endpoint G[i := 0 .. n] = Cell(0);
  run {
    communicate F[i := 0 .. n]: F[i].x + 1 -> G[i]: G[i].y;
  }
"#,
        );
        assert!(matches!(project_err(&src), ProjectError::UnsupportedSyntax { .. }));
    }

    #[test]
    fn ranged_call_becomes_par_with_instantiated_contract() {
        let src = with_header(
            r#"
  endpoint F[i := 0 .. n] = Cell(0);
  run {
    endpoint F[i := 0 .. n]: F[i].bump(2);
  }
"#,
        );
        let (vp, trace) = project(&src);
        assert!(trace.contains(Rule::CpMethodCallRange));
        let VStmt::Par { binder, requires, ensures, body, .. } = &vp.body[0] else {
            panic!("expected par")
        };
        assert_eq!(binder, "i");
        assert_eq!(expr_to_string(requires), "Perm(F[i].x, 1)");
        assert_eq!(expr_to_string(ensures), "Perm(F[i].x, 1)");
        let VStmt::Confined { target, body: inner } = &body[0] else {
            panic!("expected confined call")
        };
        assert_eq!(target.sort, "F");
        assert!(matches!(inner[0], VStmt::MethodCall { .. }));
        assert!(vp.called_methods.contains(&("Cell".to_string(), "bump".to_string())));
    }

    #[test]
    fn ranged_call_rejects_foreign_receiver() {
        let src = with_header(
            r#"
  endpoint F[i := 0 .. n] = Cell(0);
  endpoint G[i := 0 .. n] = Cell(0);
  run {
    endpoint F[i := 0 .. n]: G[i].bump(2);
  }
"#,
        );
        assert!(matches!(project_err(&src), ProjectError::UnsupportedSyntax { .. }));
    }

    #[test]
    fn if_emits_unanimity_assert_and_confined_condition() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  endpoint b = Cell(0);
  run {
    if ((\endpoint a; a.x > 0) && (\endpoint b; b.x > 0)) {
      endpoint a: a.y := 1;
    }
  }
"#,
        );
        let (vp, trace) = project(&src);
        assert!(trace.contains(Rule::CpIf));
        assert!(trace.contains(Rule::CpExpr));
        assert!(trace.contains(Rule::CpExprSkip));
        let VStmt::Assert { check, expr, .. } = &vp.body[0] else { panic!("expected assert") };
        assert_eq!(*check, CheckKind::Unanimity);
        // view(a) = Confined(a, a.x>0) && true; view(b) = true && Confined(b, ...);
        // the `true`s drop out, leaving one equality of two confined views.
        let text = expr_to_string(expr);
        assert_eq!(text, "Confined(a, a.x > 0) == Confined(b, b.x > 0)");
        let VStmt::If { cond, .. } = &vp.body[1] else { panic!("expected if") };
        assert_eq!(
            expr_to_string(cond),
            "Confined(a, a.x > 0) && Confined(b, b.x > 0)"
        );
    }

    #[test]
    fn single_conjunct_condition_has_vacuous_unanimity() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  run {
    if ((\endpoint a; a.x > 0)) {
    }
  }
"#,
        );
        let (vp, _) = project(&src);
        let VStmt::Assert { expr, .. } = &vp.body[0] else { panic!("expected assert") };
        assert!(expr.is_true());
    }

    #[test]
    fn range_condition_quantifies_unanimity_over_members() {
        let src = with_header(
            r#"
  endpoint F[i := 0 .. n] = Cell(0);
  run {
    while ((\endpoint F[i := 0 .. n]; F[i].x < 5)) {
      endpoint F[i := 0 .. n]: F[i].bump(1);
    }
  }
"#,
        );
        let (vp, trace) = project(&src);
        assert!(trace.contains(Rule::CpWhile));
        assert!(trace.contains(Rule::CpExprRange));
        assert!(trace.contains(Rule::CpExprIndex));
        let VStmt::Assert { check, expr, .. } = &vp.body[0] else { panic!("expected assert") };
        assert_eq!(*check, CheckKind::Unanimity);
        let text = expr_to_string(expr);
        // Two fresh members j, j1 are compared under index guards.
        assert!(text.contains("\\forall j"), "{text}");
        assert!(text.contains("=="), "{text}");
        // While re-asserts unanimity as its last body statement.
        let VStmt::While { body, cond, .. } = &vp.body[1] else { panic!("expected while") };
        assert!(matches!(
            body.last(),
            Some(VStmt::Assert { check: CheckKind::Unanimity, .. })
        ));
        assert_eq!(
            expr_to_string(cond),
            "(\\forall i := 0 .. n; Confined(F[i], F[i].x < 5))"
        );
    }

    #[test]
    fn chor_facts_are_included_verbatim() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  endpoint b = Cell(0);
  run {
    assert (\chor a.x == b.x) ** (\endpoint a; Perm(a.x, 1\2));
  }
"#,
        );
        let (vp, _) = project(&src);
        let VStmt::Assert { expr, .. } = &vp.body[0] else { panic!("expected assert") };
        assert_eq!(
            expr_to_string(expr),
            "a.x == b.x ** Confined(a, Perm(a.x, 1\\2))"
        );
    }

    #[test]
    fn contracts_are_asserted_around_the_body() {
        let src = format!(
            "{HEADER}\nrequires n >= 1;\nchoreography T(int n) {{\n{}\n}}\n",
            r#"
  endpoint a = Cell(0);

  ensures (\endpoint a; a.x == 1);
  run {
    endpoint a: a.x := 1;
  }
"#
        );
        let (vp, _) = project(&src);
        assert!(matches!(
            &vp.body[0],
            VStmt::Assert { check: CheckKind::ContractPre, label, .. } if label == "chor-pre"
        ));
        assert!(matches!(
            &vp.body.last().unwrap(),
            VStmt::Assert { check: CheckKind::ContractPost, label, .. } if label == "run-post"
        ));
    }

    #[test]
    fn communication_sites_number_in_preorder() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  endpoint b = Cell(0);
  run {
    communicate a: a.x -> b: b.y;
    if ((\endpoint a; a.x > 0)) {
      communicate b: b.x -> a: a.y;
    }
    communicate a: a.y -> b: b.x;
  }
"#,
        );
        let (vp, _) = project(&src);
        let mut sites = Vec::new();
        let mut collect = |stmts: &[VStmt]| {
            walk_vstmts_sites(stmts, &mut sites);
        };
        collect(&vp.body);
        assert_eq!(sites, vec![0, 1, 2]);
    }

    fn walk_vstmts_sites(stmts: &[VStmt], sites: &mut Vec<usize>) {
        for s in stmts {
            match s {
                VStmt::Exhale { chan: Some(c), .. } => sites.push(c.site),
                VStmt::If { then_branch, else_branch, .. } => {
                    walk_vstmts_sites(then_branch, sites);
                    walk_vstmts_sites(else_branch, sites);
                }
                VStmt::While { body, .. }
                | VStmt::Par { body, .. }
                | VStmt::Confined { body, .. } => walk_vstmts_sites(body, sites),
                _ => {}
            }
        }
    }

    #[test]
    fn quantified_permissions_are_rejected() {
        let src = with_header(
            r#"
  endpoint F[i := 0 .. n] = Cell(0);
  run {
    assert (\forall* int k := 0 .. n; Perm(F[k].x, 1\2));
  }
"#,
        );
        let p = parse(&src).expect("parse");
        assert!(matches!(
            project_chor(&p),
            Err(ProjectError::UnsupportedSyntax { .. })
        ));
    }

    #[test]
    fn fresh_message_names_avoid_program_identifiers() {
        let src = with_header(
            r#"
  endpoint a = Cell(0);
  endpoint v = Cell(0);
  run {
    communicate a: a.x -> v: v.y;
    communicate v: v.x -> a: a.y;
  }
"#,
        );
        let (vp, _) = project(&src);
        let VStmt::Let { name: n1, .. } = &vp.body[0] else { panic!() };
        let VStmt::Let { name: n2, .. } = &vp.body[4] else { panic!() };
        assert_ne!(n1, "v");
        assert_ne!(n2, n1);
    }
}
