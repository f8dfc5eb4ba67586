//! Static well-formedness checks, run between parsing and projection.
//!
//! The pass enforces, deterministically (same program → same diagnostics):
//!
//! * **structure** — exactly one choreography; no duplicate names; every
//!   referenced class, method, function, predicate, and endpoint resolves;
//!   argument counts match; assignment targets are field locations;
//!   `communicate` connects two instances, or a family range to an indexed
//!   member;
//! * **scoping** — every variable resolves to a parameter, an endpoint, or
//!   a binder in scope; binders do not shadow anything visible; `this` stays
//!   inside class bodies;
//! * **purity** — expressions stay within the level their position allows
//!   (pure indices and bounds, heap-level statement expressions, resource-
//!   level contracts and invariants);
//! * **choreography forms** — `\endpoint` appears only in positive positions
//!   (polarity survives `&&` and `**` and the right side of `==>`, nothing
//!   else); `\chor` appears in asserts, invariants and run/choreography
//!   contracts, never in branch or loop conditions; `\msg`/`\sender`/
//!   `\receiver` appear only inside channel invariants; branch and loop
//!   conditions are `&&`-lists of `\endpoint` expressions;
//! * **style warnings** — user-written `inhale`/`exhale` are legal but
//!   flagged, since they bypass the reasoning the projections set up.

use crate::ast::*;
use crate::diag::{sort_diagnostics, DiagCode, Diagnostic, Span};
use crate::subst::subst_placeholders;
use std::collections::{BTreeMap, BTreeSet};

/// Check a parsed program. An empty result means the program may be
/// projected; warnings alone do not block projection.
pub fn check_wellformed(program: &Program) -> Vec<Diagnostic> {
    let mut cx = Checker::new(program);
    cx.run();
    sort_diagnostics(&mut cx.diags);
    cx.diags
}

/// What a condition/assert/contract position permits.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Position {
    /// Index expressions, range bounds, family sizes: pure only.
    Pure,
    /// Statement-level heap expressions (assignment values, call arguments).
    Heap,
    /// Method/constructor/`par` contracts, predicate bodies: resources, but
    /// no choreography forms.
    Resource,
    /// Channel invariants: resources plus the placeholders.
    ChannelInvariant,
}

struct Checker<'a> {
    program: &'a Program,
    diags: Vec<Diagnostic>,
    classes: BTreeMap<&'a str, &'a ClassDecl>,
    functions: BTreeMap<&'a str, &'a FunctionDecl>,
    predicates: BTreeMap<&'a str, &'a PredicateDecl>,
    /// Endpoint declarations of the (single) choreography.
    endpoints: BTreeMap<&'a str, &'a EndpointDecl>,
}

/// Names visible to an expression, with the binders innermost-last.
#[derive(Clone, Default)]
struct Scope {
    vars: BTreeSet<String>,
    /// Endpoint names double as variables (`a.x`, `F[i]`), but family names
    /// may only be used indexed.
    families: BTreeSet<String>,
    singulars: BTreeSet<String>,
    this_allowed: bool,
}

impl Scope {
    fn with_binder(&self, binder: &str) -> Scope {
        let mut s = self.clone();
        s.vars.insert(binder.to_string());
        s
    }

    fn sees(&self, name: &str) -> bool {
        self.vars.contains(name) || self.singulars.contains(name) || self.families.contains(name)
    }
}

impl<'a> Checker<'a> {
    fn new(program: &'a Program) -> Self {
        Checker {
            program,
            diags: Vec::new(),
            classes: BTreeMap::new(),
            functions: BTreeMap::new(),
            predicates: BTreeMap::new(),
            endpoints: BTreeMap::new(),
        }
    }

    fn error(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, span, msg.into()));
    }

    fn warning(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::warning(code, span, msg.into()));
    }

    fn run(&mut self) {
        self.collect_decls();
        for d in &self.program.decls {
            match d {
                Decl::Class(c) => self.check_class(c),
                Decl::Predicate(p) => self.check_predicate(p),
                Decl::Function(f) => self.check_function(f),
                Decl::Choreography(c) => self.check_choreography(c),
            }
        }
    }

    fn collect_decls(&mut self) {
        let mut chor_count = 0usize;
        let mut names: BTreeMap<&str, Span> = BTreeMap::new();
        for d in &self.program.decls {
            let (name, span): (&str, Span) = match d {
                Decl::Class(c) => {
                    self.classes.insert(c.name.as_str(), c);
                    (c.name.as_str(), c.span)
                }
                Decl::Predicate(p) => {
                    self.predicates.insert(p.name.as_str(), p);
                    (p.name.as_str(), p.span)
                }
                Decl::Function(f) => {
                    self.functions.insert(f.name.as_str(), f);
                    (f.name.as_str(), f.span)
                }
                Decl::Choreography(c) => {
                    chor_count += 1;
                    (c.name.as_str(), c.span)
                }
            };
            if names.insert(name, span).is_some() {
                self.error(
                    DiagCode::DuplicateName,
                    span,
                    format!("`{name}` is declared more than once"),
                );
            }
        }
        if chor_count != 1 {
            self.error(
                DiagCode::ChoreographyCount,
                Span::default(),
                format!("a program declares exactly one choreography, found {chor_count}"),
            );
        }
        if let Some(c) = self.program.choreography() {
            for ep in &c.endpoints {
                if self.endpoints.insert(ep.name(), ep).is_some() {
                    self.error(
                        DiagCode::DuplicateName,
                        decl_span(ep),
                        format!("endpoint `{}` is declared more than once", ep.name()),
                    );
                }
            }
        }
    }

    // ----- declarations --------------------------------------------------

    fn check_class(&mut self, c: &ClassDecl) {
        let mut fields = BTreeSet::new();
        for f in &c.fields {
            if !fields.insert(f.name.as_str()) {
                self.error(
                    DiagCode::DuplicateName,
                    f.span,
                    format!("field `{}` is declared more than once", f.name),
                );
            }
            if !data_type(&f.ty) {
                self.error(
                    DiagCode::Structure,
                    f.span,
                    format!(
                        "field `{}` must have a data type (int, boolean, or a seq of them)",
                        f.name
                    ),
                );
            }
        }
        let mut methods = BTreeSet::new();
        for m in &c.methods {
            if !methods.insert(m.name.as_str()) {
                self.error(
                    DiagCode::DuplicateName,
                    m.span,
                    format!("method `{}` is declared more than once", m.name),
                );
            }
            self.check_params(&m.params, m.span);
            let scope = self.member_scope(&m.params);
            for e in m.contract.requires.iter().chain(&m.contract.ensures) {
                self.check_expr(e, &scope, Position::Resource);
            }
            self.check_method_body(&m.body, &scope);
        }
        if let Some(ctor) = &c.ctor {
            self.check_params(&ctor.params, ctor.span);
            let scope = self.member_scope(&ctor.params);
            for e in ctor.contract.requires.iter().chain(&ctor.contract.ensures) {
                self.check_expr(e, &scope, Position::Resource);
            }
            self.check_method_body(&ctor.body, &scope);
        }
    }

    fn member_scope(&self, params: &[Param]) -> Scope {
        Scope {
            vars: params.iter().map(|p| p.name.clone()).collect(),
            families: BTreeSet::new(),
            singulars: BTreeSet::new(),
            this_allowed: true,
        }
    }

    fn check_params(&mut self, params: &[Param], span: Span) {
        let mut seen = BTreeSet::new();
        for p in params {
            if !seen.insert(p.name.as_str()) {
                self.error(
                    DiagCode::DuplicateName,
                    span,
                    format!("parameter `{}` is declared more than once", p.name),
                );
            }
            if let Type::Class { name } = &p.ty {
                if !self.classes.contains_key(name.as_str()) {
                    self.error(
                        DiagCode::UnresolvedName,
                        span,
                        format!("unknown class `{name}` in parameter `{}`", p.name),
                    );
                }
            }
        }
    }

    fn check_predicate(&mut self, p: &PredicateDecl) {
        self.check_params(&p.params, p.span);
        let scope = Scope {
            vars: p.params.iter().map(|q| q.name.clone()).collect(),
            ..Scope::default()
        };
        self.check_expr(&p.body, &scope, Position::Resource);
    }

    fn check_function(&mut self, f: &FunctionDecl) {
        self.check_params(&f.params, f.span);
        let scope = Scope {
            vars: f.params.iter().map(|q| q.name.clone()).collect(),
            ..Scope::default()
        };
        for e in f.contract.requires.iter().chain(&f.contract.ensures) {
            self.check_expr(e, &scope, Position::Resource);
        }
        self.check_expr(&f.body, &scope, Position::Heap);
        if f.body.level() > PurityLevel::Heap {
            self.error(
                DiagCode::Purity,
                f.span,
                format!("the body of function `{}` must stay at heap level", f.name),
            );
        }
    }

    // ----- method bodies --------------------------------------------------

    fn check_method_body(&mut self, body: &[MethodStmt], scope: &Scope) {
        for s in body {
            match &s.kind {
                MethodStmtKind::Assert { expr } => {
                    self.check_expr(expr, scope, Position::Resource);
                }
                MethodStmtKind::Inhale { expr } => {
                    self.warning(
                        DiagCode::UserInhaleExhale,
                        s.span,
                        "user-written `inhale` changes the permission ledger directly",
                    );
                    self.check_expr(expr, scope, Position::Resource);
                }
                MethodStmtKind::Exhale { expr } => {
                    self.warning(
                        DiagCode::UserInhaleExhale,
                        s.span,
                        "user-written `exhale` changes the permission ledger directly",
                    );
                    self.check_expr(expr, scope, Position::Resource);
                }
                MethodStmtKind::Assign { dest, value } => {
                    self.check_assignable(dest, s.span);
                    self.check_expr(dest, scope, Position::Heap);
                    self.check_expr(value, scope, Position::Heap);
                }
                MethodStmtKind::Call { recv, method, args } => {
                    self.check_expr(recv, scope, Position::Heap);
                    for a in args {
                        self.check_expr(a, scope, Position::Heap);
                    }
                    self.resolve_method_if_static(recv, method, args.len(), scope, s.span);
                }
                MethodStmtKind::If { cond, then_branch, else_branch } => {
                    self.check_expr(cond, scope, Position::Heap);
                    self.check_method_body(then_branch, scope);
                    self.check_method_body(else_branch, scope);
                }
                MethodStmtKind::While { invariants, cond, body } => {
                    for inv in invariants {
                        self.check_expr(inv, scope, Position::Resource);
                    }
                    self.check_expr(cond, scope, Position::Heap);
                    self.check_method_body(body, scope);
                }
                MethodStmtKind::Par { contract, ty, binder, lo, hi, body } => {
                    if !matches!(ty, Type::Int) {
                        self.error(
                            DiagCode::Structure,
                            s.span,
                            "a `par` binder ranges over int",
                        );
                    }
                    self.check_expr(lo, scope, Position::Pure);
                    self.check_expr(hi, scope, Position::Pure);
                    self.check_binder_fresh(binder, scope, s.span);
                    let inner = scope.with_binder(binder);
                    for e in contract.requires.iter().chain(&contract.ensures) {
                        self.check_expr(e, &inner, Position::Resource);
                    }
                    self.check_method_body(body, &inner);
                }
            }
        }
    }

    /// When the receiver's class is statically known (it is `this` or a
    /// class-typed parameter), resolve the method and check the arity.
    /// Otherwise binding happens at runtime.
    fn resolve_method_if_static(
        &mut self,
        recv: &Expr,
        method: &str,
        argc: usize,
        scope: &Scope,
        span: Span,
    ) {
        let class_name: Option<String> = match &recv.kind {
            ExprKind::This if scope.this_allowed => None, // own class: checked per class below
            ExprKind::Var { name } => {
                self.endpoints.get(name.as_str()).map(|ep| ep.class().to_string())
            }
            ExprKind::SeqIndex { base, .. } => match &base.kind {
                ExprKind::Var { name } => {
                    self.endpoints.get(name.as_str()).map(|ep| ep.class().to_string())
                }
                _ => None,
            },
            _ => None,
        };
        if let Some(class_name) = class_name {
            match self.classes.get(class_name.as_str()).and_then(|c| c.method(method)) {
                None => self.error(
                    DiagCode::UnresolvedName,
                    span,
                    format!("class `{class_name}` has no method `{method}`"),
                ),
                Some(m) if m.params.len() != argc => self.error(
                    DiagCode::Structure,
                    span,
                    format!(
                        "method `{method}` takes {} argument(s), {argc} given",
                        m.params.len()
                    ),
                ),
                Some(_) => {}
            }
        }
    }

    fn check_assignable(&mut self, dest: &Expr, span: Span) {
        if !matches!(&dest.kind, ExprKind::FieldAccess { .. }) {
            self.error(
                DiagCode::AssignableLocation,
                span,
                "only field locations (`x.f`) can be assigned",
            );
        }
    }

    // ----- the choreography ----------------------------------------------

    fn check_choreography(&mut self, c: &Choreography) {
        let mut param_names = BTreeSet::new();
        self.check_params(&c.params, c.span);
        for p in &c.params {
            if !matches!(p.ty, Type::Int | Type::Bool) {
                self.error(
                    DiagCode::Structure,
                    c.span,
                    format!("choreography parameter `{}` must be int or boolean", p.name),
                );
            }
            param_names.insert(p.name.clone());
        }

        // Endpoint declarations: class resolves; size pure over params;
        // family constructor args pure over params + binder; singular
        // constructor args heap over params + earlier endpoints.
        let param_scope = Scope { vars: param_names.clone(), ..Scope::default() };
        let mut earlier = param_scope.clone();
        for ep in &c.endpoints {
            let span = decl_span(ep);
            if !self.classes.contains_key(ep.class()) {
                self.error(
                    DiagCode::UnresolvedName,
                    span,
                    format!("unknown class `{}` for endpoint `{}`", ep.class(), ep.name()),
                );
            }
            match ep {
                EndpointDecl::Singular { args, class, .. } => {
                    for a in args {
                        self.check_expr(a, &earlier, Position::Heap);
                    }
                    self.check_ctor_arity(class, args.len(), span);
                }
                EndpointDecl::Family { binder, size, args, class, .. } => {
                    self.check_expr(size, &param_scope, Position::Pure);
                    self.check_binder_fresh(binder, &earlier, span);
                    let inner = param_scope.with_binder(binder);
                    for a in args {
                        self.check_expr(a, &inner, Position::Pure);
                    }
                    self.check_ctor_arity(class, args.len(), span);
                }
            }
            match ep {
                EndpointDecl::Singular { name, .. } => {
                    earlier.singulars.insert(name.clone());
                }
                EndpointDecl::Family { name, .. } => {
                    earlier.families.insert(name.clone());
                }
            }
        }

        // Scope of the run body: params plus all endpoints.
        let scope = earlier;
        for e in c.contract.requires.iter().chain(&c.contract.ensures) {
            self.check_chor_assertion(e, &scope, true);
        }
        for e in c.run.contract.requires.iter().chain(&c.run.contract.ensures) {
            self.check_chor_assertion(e, &scope, true);
        }
        self.check_chor_body(&c.run.body, &scope);
    }

    fn check_ctor_arity(&mut self, class: &str, argc: usize, span: Span) {
        if let Some(cd) = self.classes.get(class) {
            let expected = cd.ctor.as_ref().map(|k| k.params.len()).unwrap_or(0);
            if expected != argc {
                self.error(
                    DiagCode::Structure,
                    span,
                    format!("constructor of `{class}` takes {expected} argument(s), {argc} given"),
                );
            }
        }
    }

    fn check_chor_body(&mut self, body: &[ChorStmt], scope: &Scope) {
        for s in body {
            match &s.kind {
                ChorStmtKind::If { cond, then_branch, else_branch } => {
                    self.check_condition(cond, scope);
                    self.check_chor_body(then_branch, scope);
                    self.check_chor_body(else_branch, scope);
                }
                ChorStmtKind::While { invariants, cond, body } => {
                    for inv in invariants {
                        self.check_chor_assertion(inv, scope, true);
                    }
                    self.check_condition(cond, scope);
                    self.check_chor_body(body, scope);
                }
                ChorStmtKind::Assert { expr } => {
                    self.check_chor_assertion(expr, scope, true);
                }
                ChorStmtKind::Endpoint { target, action } => {
                    let inner = self.check_target(target, scope, s.span);
                    match action {
                        EpAction::Assign { dest, value } => {
                            self.check_assignable(dest, s.span);
                            self.check_expr(dest, &inner, Position::Heap);
                            self.check_expr(value, &inner, Position::Heap);
                        }
                        EpAction::Call { recv, method, args } => {
                            self.check_expr(recv, &inner, Position::Heap);
                            for a in args {
                                self.check_expr(a, &inner, Position::Heap);
                            }
                            self.resolve_method_if_static(recv, method, args.len(), &inner, s.span);
                        }
                    }
                }
                ChorStmtKind::Communicate { invariant, sender, msg, receiver, dest } => {
                    self.check_comm_shape(sender, receiver, s.span);
                    let sender_scope = self.check_target(sender, scope, s.span);
                    // The sender's binder (if any) is visible in the message,
                    // the receiver index, and the destination.
                    let recv_scope = self.check_target_in(receiver, &sender_scope, s.span);
                    self.check_expr(msg, &sender_scope, Position::Heap);
                    self.check_assignable(dest, s.span);
                    self.check_expr(dest, &recv_scope, Position::Heap);
                    if let Some(inv) = invariant {
                        self.check_expr(inv, scope, Position::ChannelInvariant);
                    }
                }
            }
        }
    }

    /// `communicate` links two instances, or a family range to an indexed
    /// member driven by the range binder.
    fn check_comm_shape(&mut self, sender: &EndpointTarget, receiver: &EndpointTarget, span: Span) {
        match (sender, receiver) {
            (EndpointTarget::FamilyRange { .. }, EndpointTarget::FamilyIndex { .. }) => {}
            (EndpointTarget::FamilyRange { .. }, _) => {
                self.error(
                    DiagCode::Structure,
                    span,
                    "a ranged sender needs an indexed family member as receiver",
                );
            }
            (_, EndpointTarget::FamilyRange { .. }) => {
                self.error(
                    DiagCode::Structure,
                    span,
                    "only the sender of a communication can range over a family",
                );
            }
            _ => {}
        }
    }

    /// Resolve a target against `scope`; returns the scope for expressions
    /// governed by the target (its binder added, for ranges).
    fn check_target(&mut self, t: &EndpointTarget, scope: &Scope, span: Span) -> Scope {
        self.check_target_in(t, scope, span)
    }

    fn check_target_in(&mut self, t: &EndpointTarget, scope: &Scope, span: Span) -> Scope {
        match t {
            EndpointTarget::Singular { name } => {
                match self.endpoints.get(name.as_str()) {
                    None => self.error(
                        DiagCode::UnresolvedName,
                        span,
                        format!("unknown endpoint `{name}`"),
                    ),
                    Some(EndpointDecl::Family { .. }) => self.error(
                        DiagCode::Structure,
                        span,
                        format!("family `{name}` must be used with an index"),
                    ),
                    Some(EndpointDecl::Singular { .. }) => {}
                }
                scope.clone()
            }
            EndpointTarget::FamilyIndex { family, index } => {
                self.check_family_name(family, span);
                self.check_expr(index, scope, Position::Pure);
                scope.clone()
            }
            EndpointTarget::FamilyRange { family, binder, lo, hi } => {
                self.check_family_name(family, span);
                self.check_expr(lo, scope, Position::Pure);
                self.check_expr(hi, scope, Position::Pure);
                self.check_binder_fresh(binder, scope, span);
                scope.with_binder(binder)
            }
        }
    }

    fn check_family_name(&mut self, family: &str, span: Span) {
        match self.endpoints.get(family) {
            None => self.error(
                DiagCode::UnresolvedName,
                span,
                format!("unknown endpoint `{family}`"),
            ),
            Some(EndpointDecl::Singular { .. }) => self.error(
                DiagCode::Structure,
                span,
                format!("`{family}` is a singular endpoint and cannot be indexed"),
            ),
            Some(EndpointDecl::Family { .. }) => {}
        }
    }

    fn check_binder_fresh(&mut self, binder: &str, scope: &Scope, span: Span) {
        if scope.sees(binder) {
            self.error(
                DiagCode::BinderShadowing,
                span,
                format!("binder `{binder}` shadows a name already in scope"),
            );
        }
    }

    // ----- choreography-level conditions and assertions -------------------

    /// Branch/loop condition: an `&&`-list whose conjuncts are all
    /// `\endpoint` expressions with heap-level bodies.
    fn check_condition(&mut self, cond: &Expr, scope: &Scope) {
        let mut conjuncts = Vec::new();
        flatten_and(cond, &mut conjuncts);
        for c in conjuncts {
            match &c.kind {
                ExprKind::EndpointExpr { target, body } => {
                    let inner = self.check_target(target, scope, c.span);
                    self.check_expr(body, &inner, Position::Heap);
                }
                ExprKind::ChorExpr { .. } => {
                    self.error(
                        DiagCode::ChorPosition,
                        c.span,
                        "`\\chor` facts belong in asserts, invariants and contracts, \
                         not in branch or loop conditions",
                    );
                }
                _ => {
                    self.error(
                        DiagCode::ConditionShape,
                        c.span,
                        "branch and loop conditions are `&&`-lists of \
                         `(\\endpoint ...; ...)` expressions",
                    );
                }
            }
        }
    }

    /// Assert / loop invariant / run or choreography contract. `positive`
    /// tracks polarity: it survives `&&`/`**` and the right side of `==>`;
    /// every other context flips to negative, where `\endpoint` is illegal.
    fn check_chor_assertion(&mut self, e: &Expr, scope: &Scope, positive: bool) {
        match &e.kind {
            ExprKind::BinOp { op: BinOp::And, lhs, rhs } | ExprKind::SepConj { lhs, rhs } => {
                self.check_chor_assertion(lhs, scope, positive);
                self.check_chor_assertion(rhs, scope, positive);
            }
            ExprKind::BinOp { op: BinOp::Implies, lhs, rhs } => {
                // The guard must not contain choreography forms at all.
                self.check_expr(lhs, scope, Position::Heap);
                self.check_chor_assertion(rhs, scope, positive);
            }
            ExprKind::EndpointExpr { target, body } => {
                if !positive {
                    self.error(
                        DiagCode::Positivity,
                        e.span,
                        "`\\endpoint` expressions may only occur positively",
                    );
                }
                let inner = self.check_target(target, scope, e.span);
                self.check_expr(body, &inner, Position::Resource);
            }
            ExprKind::ChorExpr { body } => {
                self.check_expr(body, scope, Position::Heap);
            }
            ExprKind::Forall { binder, lo, hi, body } => {
                self.check_expr(lo, scope, Position::Pure);
                self.check_expr(hi, scope, Position::Pure);
                self.check_binder_fresh(binder, scope, e.span);
                // Quantification does not preserve polarity.
                self.check_chor_assertion(body, &scope.with_binder(binder), false);
            }
            _ => {
                // A bare conjunct is a global fact: heap level at most.
                self.check_expr(e, scope, Position::Heap);
            }
        }
    }

    // ----- expression checking --------------------------------------------

    /// Leaf expression check: resolution, arity, purity, placeholder and
    /// choreography-form placement.
    fn check_expr(&mut self, e: &Expr, scope: &Scope, pos: Position) {
        self.walk_expr(e, scope, pos);
        let max = match pos {
            Position::Pure => PurityLevel::Pure,
            Position::Heap => PurityLevel::Heap,
            Position::Resource | Position::ChannelInvariant => PurityLevel::Resource,
        };
        // Placeholders are graded separately (they are legal exactly in
        // channel invariants); mask them before the level comparison.
        let masked = subst_placeholders(e, &Expr::int(0), &Expr::int(0), &Expr::int(0));
        if masked.level() > max {
            self.error(
                DiagCode::Purity,
                e.span,
                format!(
                    "expression exceeds its position: allows {:?}, found {:?}",
                    max,
                    masked.level()
                ),
            );
        }
    }

    fn walk_expr(&mut self, e: &Expr, scope: &Scope, pos: Position) {
        match &e.kind {
            ExprKind::Var { name } => {
                if scope.families.contains(name) {
                    self.error(
                        DiagCode::Structure,
                        e.span,
                        format!("family `{name}` must be used with an index"),
                    );
                } else if !scope.vars.contains(name) && !scope.singulars.contains(name) {
                    self.error(
                        DiagCode::UnresolvedName,
                        e.span,
                        format!("unknown name `{name}`"),
                    );
                }
            }
            ExprKind::IntLit { .. } | ExprKind::BoolLit { .. } | ExprKind::FracLit { .. } => {}
            ExprKind::This => {
                if !scope.this_allowed {
                    self.error(
                        DiagCode::UnresolvedName,
                        e.span,
                        "`this` is only available inside class bodies",
                    );
                }
            }
            ExprKind::Msg | ExprKind::Sender | ExprKind::Receiver => {
                if pos != Position::ChannelInvariant {
                    self.error(
                        DiagCode::PlaceholderPosition,
                        e.span,
                        "`\\msg`, `\\sender` and `\\receiver` only have meaning \
                         inside a channel invariant",
                    );
                }
            }
            ExprKind::FieldAccess { base, .. } => self.walk_expr(base, scope, pos),
            ExprKind::SeqIndex { base, index } => {
                // `F[i]` is family indexing; its base is not a bare variable
                // use, so resolve it directly.
                match &base.kind {
                    ExprKind::Var { name } if scope.families.contains(name) => {}
                    _ => self.walk_expr(base, scope, pos),
                }
                // Family member indices must be pure even in heap positions.
                self.walk_expr(index, scope, pos);
                if index.level() > PurityLevel::Pure {
                    self.error(
                        DiagCode::Purity,
                        index.span,
                        "index expressions must be pure",
                    );
                }
            }
            ExprKind::BinOp { lhs, rhs, .. } => {
                self.walk_expr(lhs, scope, pos);
                self.walk_expr(rhs, scope, pos);
            }
            ExprKind::SepConj { lhs, rhs } => {
                self.walk_expr(lhs, scope, pos);
                self.walk_expr(rhs, scope, pos);
            }
            ExprKind::FnCall { recv, name, args, .. } => {
                if recv.is_some() {
                    self.error(
                        DiagCode::Structure,
                        e.span,
                        "method calls are statements, not expressions",
                    );
                    return;
                }
                match self.functions.get(name.as_str()) {
                    None => self.error(
                        DiagCode::UnresolvedName,
                        e.span,
                        format!("unknown function `{name}`"),
                    ),
                    Some(f) if f.params.len() != args.len() => self.error(
                        DiagCode::Structure,
                        e.span,
                        format!(
                            "function `{name}` takes {} argument(s), {} given",
                            f.params.len(),
                            args.len()
                        ),
                    ),
                    Some(_) => {}
                }
                for a in args {
                    self.walk_expr(a, scope, pos);
                }
            }
            ExprKind::Perm { place, amount } => {
                self.walk_expr(place, scope, pos);
                self.walk_expr(amount, scope, pos);
                if !matches!(
                    &place.kind,
                    ExprKind::FieldAccess { .. }
                ) {
                    self.error(
                        DiagCode::Structure,
                        e.span,
                        "`Perm` applies to a field location",
                    );
                }
            }
            ExprKind::PredApply { name, args } => {
                match self.predicates.get(name.as_str()) {
                    None => self.error(
                        DiagCode::UnresolvedName,
                        e.span,
                        format!("unknown resource predicate `{name}`"),
                    ),
                    Some(p) if p.params.len() != args.len() => self.error(
                        DiagCode::Structure,
                        e.span,
                        format!(
                            "resource `{name}` takes {} argument(s), {} given",
                            p.params.len(),
                            args.len()
                        ),
                    ),
                    Some(_) => {}
                }
                for a in args {
                    self.walk_expr(a, scope, pos);
                }
            }
            ExprKind::EndpointExpr { .. } | ExprKind::ChorExpr { .. } => {
                self.error(
                    DiagCode::ChorPosition,
                    e.span,
                    "choreography-level expressions are not allowed here",
                );
            }
            ExprKind::Forall { binder, lo, hi, body } => {
                self.walk_expr(lo, scope, pos);
                self.walk_expr(hi, scope, pos);
                self.check_binder_fresh(binder, scope, e.span);
                self.walk_expr(body, &scope.with_binder(binder), pos);
            }
            ExprKind::QuantPerm { binder, lo, hi, body, .. } => {
                self.walk_expr(lo, scope, pos);
                self.walk_expr(hi, scope, pos);
                self.check_binder_fresh(binder, scope, e.span);
                self.walk_expr(body, &scope.with_binder(binder), pos);
            }
            ExprKind::Confined { .. } => {
                self.error(
                    DiagCode::Structure,
                    e.span,
                    "confined expressions are internal and have no source form",
                );
            }
        }
    }
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

fn decl_span(ep: &EndpointDecl) -> Span {
    match ep {
        EndpointDecl::Singular { span, .. } => *span,
        EndpointDecl::Family { span, .. } => *span,
    }
}

fn data_type(ty: &Type) -> bool {
    match ty {
        Type::Int | Type::Bool => true,
        Type::Seq { elem } => matches!(**elem, Type::Int | Type::Bool),
        Type::Class { .. } => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::is_clean;
    use crate::frontend::parse;

    fn check(src: &str) -> Vec<Diagnostic> {
        check_wellformed(&parse(src).expect("parse"))
    }

    fn errors_of(src: &str, code: DiagCode) -> usize {
        check(src)
            .into_iter()
            .filter(|d| d.code == code && d.severity == crate::diag::Severity::Error)
            .count()
    }

    const CLEAN: &str = r#"
class Cell {
  int x;

  requires v >= 0;
  constructor(int v) {
    this.x := v;
  }

  requires Perm(this.x, 1);
  ensures Perm(this.x, 1) ** this.x == k;
  int set(int k) {
    this.x := k;
  }
}

choreography T(int n) {
  endpoint a = Cell(0);
  endpoint b = Cell(1);
  endpoint F[i := 0 .. n] = Cell(i);

  requires n >= 1;
  run {
    endpoint a: a.x := 3;
    endpoint F[i := 0 .. n]: F[i].set(i);
    channel_invariant \msg >= 0;
    communicate a: a.x -> b: b.x;
    if ((\endpoint a; a.x > 0) && (\endpoint b; b.x > 0)) {
      assert (\chor a.x == 3);
    }
  }
}
"#;

    #[test]
    fn clean_program_passes() {
        let diags = check(CLEAN);
        assert!(is_clean(&diags), "{diags:?}");
    }

    #[test]
    fn chor_in_condition_is_rejected() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  run {
    if ((\chor a.x > 0)) {
    }
  }
}
"#;
        assert_eq!(errors_of(src, DiagCode::ChorPosition), 1);
    }

    #[test]
    fn placeholder_outside_channel_invariant_is_rejected() {
        let src = r#"
class C {
  int x;
  int m() {
    this.x := \msg;
  }
}
choreography T(int n) {
  endpoint a = C();
  run {
  }
}
"#;
        assert_eq!(errors_of(src, DiagCode::PlaceholderPosition), 1);
    }

    #[test]
    fn negative_endpoint_expression_is_rejected() {
        // Under `\forall` polarity is lost.
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint F[i := 0 .. n] = C();
  run {
    assert (\forall k := 0 .. n; (\endpoint F[k]; F[k].x > 0));
  }
}
"#;
        assert_eq!(errors_of(src, DiagCode::Positivity), 1);
    }

    #[test]
    fn positive_endpoint_expressions_pass() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  endpoint b = C();
  run {
    assert (\endpoint a; a.x > 0) ** (n > 0 ==> (\endpoint b; b.x > 0));
  }
}
"#;
        let diags = check(src);
        assert!(is_clean(&diags), "{diags:?}");
    }

    #[test]
    fn condition_conjuncts_must_be_endpoint_expressions() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  run {
    if ((\endpoint a; a.x > 0) && n > 0) {
    }
  }
}
"#;
        assert_eq!(errors_of(src, DiagCode::ConditionShape), 1);
    }

    #[test]
    fn two_choreographies_are_rejected() {
        let src = r#"
class C { int x; }
choreography T(int n) { endpoint a = C(); run { } }
choreography U(int n) { endpoint a = C(); run { } }
"#;
        assert_eq!(errors_of(src, DiagCode::ChoreographyCount), 1);
    }

    #[test]
    fn unresolved_names_are_reported() {
        let src = r#"
choreography T(int n) {
  endpoint a = Missing();
  run {
    endpoint a: a.x := zz;
  }
}
"#;
        assert!(errors_of(src, DiagCode::UnresolvedName) >= 2);
    }

    #[test]
    fn binder_shadowing_is_rejected() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint F[i := 0 .. n] = C();
  run {
    endpoint F[n := 0 .. n]: F[n].x := 1;
  }
}
"#;
        assert_eq!(errors_of(src, DiagCode::BinderShadowing), 1);
    }

    #[test]
    fn assignment_targets_must_be_fields() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  run {
    endpoint a: a := 1;
  }
}
"#;
        assert_eq!(errors_of(src, DiagCode::AssignableLocation), 1);
    }

    #[test]
    fn ranged_receiver_is_rejected() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  endpoint F[i := 0 .. n] = C();
  run {
    communicate a: a.x -> F[i := 0 .. n]: F[i].x;
  }
}
"#;
        assert_eq!(errors_of(src, DiagCode::Structure), 1);
    }

    #[test]
    fn user_inhale_gets_a_warning_only() {
        let src = r#"
class C {
  int x;
  int m() {
    inhale Perm(this.x, 1);
  }
}
choreography T(int n) {
  endpoint a = C();
  run {
  }
}
"#;
        let diags = check(src);
        assert!(is_clean(&diags), "{diags:?}");
        assert_eq!(
            diags.iter().filter(|d| d.code == DiagCode::UserInhaleExhale).count(),
            1
        );
    }

    #[test]
    fn family_size_must_be_pure_over_params() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  endpoint F[i := 0 .. a.x] = C();
  run {
  }
}
"#;
        assert!(errors_of(src, DiagCode::Purity) >= 1);
    }

    #[test]
    fn purity_of_indices_is_enforced() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  endpoint F[i := 0 .. n] = C();
  run {
    endpoint F[a.x]: F[a.x].x := 1;
  }
}
"#;
        assert!(errors_of(src, DiagCode::Purity) >= 1);
    }

    #[test]
    fn diagnostics_are_deterministic() {
        let src = r#"
class C { int x; }
choreography T(int n) {
  endpoint a = C();
  run {
    endpoint a: a := zz;
    if ((\chor a.x > 0)) {
    }
  }
}
"#;
        assert_eq!(check(src), check(src));
        assert!(!check(src).is_empty());
    }

    #[test]
    fn duplicate_declarations_are_rejected() {
        let src = r#"
class C { int x; int x; }
class C { int y; }
choreography T(int n) {
  endpoint a = C();
  endpoint a = C();
  run {
  }
}
"#;
        assert!(errors_of(src, DiagCode::DuplicateName) >= 3);
    }
}
