//! Abstract syntax for the choreographic DSL.
//!
//! The tree mirrors the surface language: a program is a list of declarations
//! (classes, resource predicates, pure/heap functions, and exactly one
//! choreography). Expressions live in a single [`Expr`] type; the grammar's
//! stratification into pure (`E`), heap (`H`) and resource (`R`) layers is
//! recovered by [`Expr::level`], and the choreography-only forms
//! (`\endpoint`, `\chor`, channel placeholders) are ordinary variants whose
//! placement is policed by the well-formedness pass.

use crate::diag::Span;
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// The sort of an endpoint target: the name of a singular endpoint or of a
/// family. Both `F[i]` and `F[i := 0 .. n]` have sort `F`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SortTag(pub String);

impl fmt::Display for SortTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Result of the [`EndpointTarget::covers`] overlap test.
///
/// Index expressions contain parameters, so coverage is necessarily
/// approximate: distinct sorts certainly do not overlap, equal sorts might.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coverage {
    No,
    Maybe,
}

/// Purity level of an expression, ordered `Pure < Heap < Resource < Chor`.
///
/// `Chor` marks forms that only make sense at the choreography level
/// (`\endpoint`, `\chor`) or inside channel invariants (`\msg`, `\sender`,
/// `\receiver`); where exactly they may appear is checked separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PurityLevel {
    Pure,
    Heap,
    Resource,
    Chor,
}

/// Types as written in declarations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Type {
    Int,
    Bool,
    Seq { elem: Box<Type> },
    Class { name: String },
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Bool => f.write_str("boolean"),
            Type::Seq { elem } => write!(f, "seq<{}>", elem),
            Type::Class { name } => f.write_str(name),
        }
    }
}

/// Binary operators. `SepConj` (`**`) is kept as a separate [`ExprKind`]
/// variant because it changes the purity level; everything else lives here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Implies,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Implies => "==>",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

/// An expression together with its source position.
///
/// Equality is structural: [`Span`] compares equal to everything, so two
/// occurrences of `F[i].x` written on different lines are `==`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expr {
    #[serde(flatten)]
    pub kind: ExprKind,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Build an expression with a default (unknown) position. Used by the
    /// projections, which synthesize trees that never came from source.
    pub fn synth(kind: ExprKind) -> Self {
        Expr { kind, span: Span::default() }
    }

    pub fn int(v: impl Into<BigInt>) -> Self {
        Expr::synth(ExprKind::IntLit { value: v.into() })
    }

    pub fn bool(v: bool) -> Self {
        Expr::synth(ExprKind::BoolLit { value: v })
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::synth(ExprKind::Var { name: name.into() })
    }

    pub fn is_true(&self) -> bool {
        matches!(self.kind, ExprKind::BoolLit { value: true })
    }

    /// Binary operation with source-free position.
    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::synth(ExprKind::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    /// `lhs && rhs`, dropping literal `true` operands so that projections
    /// produce exactly `true` for fully-skipped conditions.
    pub fn and(lhs: Expr, rhs: Expr) -> Self {
        if lhs.is_true() {
            rhs
        } else if rhs.is_true() {
            lhs
        } else {
            Expr::bin(BinOp::And, lhs, rhs)
        }
    }

    /// Conjoin a list with [`Expr::and`]; the empty list is `true`.
    pub fn and_all(mut conjuncts: Vec<Expr>) -> Self {
        match conjuncts.len() {
            0 => Expr::bool(true),
            1 => conjuncts.pop().unwrap(),
            _ => {
                let mut it = conjuncts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, Expr::and)
            }
        }
    }

    /// `lhs ** rhs`, dropping literal `true` operands.
    pub fn sep(lhs: Expr, rhs: Expr) -> Self {
        if lhs.is_true() {
            rhs
        } else if rhs.is_true() {
            lhs
        } else {
            Expr::synth(ExprKind::SepConj { lhs: Box::new(lhs), rhs: Box::new(rhs) })
        }
    }

    /// Conjoin a list with [`Expr::sep`]; the empty list is `true`.
    pub fn sep_all(mut conjuncts: Vec<Expr>) -> Self {
        match conjuncts.len() {
            0 => Expr::bool(true),
            1 => conjuncts.pop().unwrap(),
            _ => {
                let mut it = conjuncts.into_iter();
                let first = it.next().unwrap();
                it.fold(first, Expr::sep)
            }
        }
    }

    /// Purity level of this expression (join over subterms).
    pub fn level(&self) -> PurityLevel {
        use PurityLevel::*;
        match &self.kind {
            ExprKind::Var { .. } | ExprKind::IntLit { .. } | ExprKind::BoolLit { .. }
            | ExprKind::FracLit { .. } => Pure,
            ExprKind::This => Heap,
            ExprKind::FieldAccess { base, .. } => base.level().max(Heap),
            ExprKind::SeqIndex { base, index } => base.level().max(index.level()),
            ExprKind::BinOp { lhs, rhs, .. } => lhs.level().max(rhs.level()),
            ExprKind::FnCall { recv, args, heap_fn, .. } => {
                let mut l = if *heap_fn { Heap } else { Pure };
                if let Some(r) = recv {
                    l = l.max(r.level());
                }
                for a in args {
                    l = l.max(a.level());
                }
                l
            }
            ExprKind::Perm { .. } | ExprKind::PredApply { .. } | ExprKind::QuantPerm { .. } => {
                Resource
            }
            ExprKind::SepConj { lhs, rhs } => lhs.level().max(rhs.level()).max(Resource),
            ExprKind::Forall { body, lo, hi, .. } => {
                lo.level().max(hi.level()).max(body.level())
            }
            ExprKind::EndpointExpr { .. }
            | ExprKind::ChorExpr { .. }
            | ExprKind::Msg
            | ExprKind::Sender
            | ExprKind::Receiver => Chor,
            ExprKind::Confined { body, .. } => body.level(),
        }
    }

    /// All free variable names (binders of `\forall` and quantified
    /// permissions are respected; field and method names are not variables).
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_vars(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free_vars(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match &self.kind {
            ExprKind::Var { name } => {
                if !bound.iter().any(|b| b == name) {
                    out.insert(name.clone());
                }
            }
            ExprKind::IntLit { .. }
            | ExprKind::BoolLit { .. }
            | ExprKind::FracLit { .. }
            | ExprKind::This
            | ExprKind::Msg
            | ExprKind::Sender
            | ExprKind::Receiver => {}
            ExprKind::FieldAccess { base, .. } => base.collect_free_vars(bound, out),
            ExprKind::SeqIndex { base, index } => {
                base.collect_free_vars(bound, out);
                index.collect_free_vars(bound, out);
            }
            ExprKind::BinOp { lhs, rhs, .. } | ExprKind::SepConj { lhs, rhs } => {
                lhs.collect_free_vars(bound, out);
                rhs.collect_free_vars(bound, out);
            }
            ExprKind::FnCall { recv, args, .. } => {
                if let Some(r) = recv {
                    r.collect_free_vars(bound, out);
                }
                for a in args {
                    a.collect_free_vars(bound, out);
                }
            }
            ExprKind::Perm { place, amount } => {
                place.collect_free_vars(bound, out);
                amount.collect_free_vars(bound, out);
            }
            ExprKind::PredApply { args, .. } => {
                for a in args {
                    a.collect_free_vars(bound, out);
                }
            }
            ExprKind::Forall { binder, lo, hi, body }
            | ExprKind::QuantPerm { binder, lo, hi, body, .. } => {
                lo.collect_free_vars(bound, out);
                hi.collect_free_vars(bound, out);
                bound.push(binder.clone());
                body.collect_free_vars(bound, out);
                bound.pop();
            }
            ExprKind::EndpointExpr { target, body } => {
                match target {
                    EndpointTarget::Singular { .. } => {
                        body.collect_free_vars(bound, out);
                    }
                    EndpointTarget::FamilyIndex { index, .. } => {
                        index.collect_free_vars(bound, out);
                        body.collect_free_vars(bound, out);
                    }
                    EndpointTarget::FamilyRange { binder, lo, hi, .. } => {
                        lo.collect_free_vars(bound, out);
                        hi.collect_free_vars(bound, out);
                        bound.push(binder.clone());
                        body.collect_free_vars(bound, out);
                        bound.pop();
                    }
                }
            }
            ExprKind::ChorExpr { body } => body.collect_free_vars(bound, out),
            ExprKind::Confined { target, body } => {
                if let Some(ix) = &target.index {
                    ix.collect_free_vars(bound, out);
                }
                body.collect_free_vars(bound, out);
            }
        }
    }

    /// Walk the whole tree, calling `f` on every node (pre-order).
    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Var { .. }
            | ExprKind::IntLit { .. }
            | ExprKind::BoolLit { .. }
            | ExprKind::FracLit { .. }
            | ExprKind::This
            | ExprKind::Msg
            | ExprKind::Sender
            | ExprKind::Receiver => {}
            ExprKind::FieldAccess { base, .. } => base.walk(f),
            ExprKind::SeqIndex { base, index } => {
                base.walk(f);
                index.walk(f);
            }
            ExprKind::BinOp { lhs, rhs, .. } | ExprKind::SepConj { lhs, rhs } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::FnCall { recv, args, .. } => {
                if let Some(r) = recv {
                    r.walk(f);
                }
                for a in args {
                    a.walk(f);
                }
            }
            ExprKind::Perm { place, amount } => {
                place.walk(f);
                amount.walk(f);
            }
            ExprKind::PredApply { args, .. } => {
                for a in args {
                    a.walk(f);
                }
            }
            ExprKind::Forall { lo, hi, body, .. }
            | ExprKind::QuantPerm { lo, hi, body, .. } => {
                lo.walk(f);
                hi.walk(f);
                body.walk(f);
            }
            ExprKind::EndpointExpr { target, body } => {
                match target {
                    EndpointTarget::FamilyIndex { index, .. } => index.walk(f),
                    EndpointTarget::FamilyRange { lo, hi, .. } => {
                        lo.walk(f);
                        hi.walk(f);
                    }
                    EndpointTarget::Singular { .. } => {}
                }
                body.walk(f);
            }
            ExprKind::ChorExpr { body } => body.walk(f),
            ExprKind::Confined { target, body } => {
                if let Some(ix) = &target.index {
                    ix.walk(f);
                }
                body.walk(f);
            }
        }
    }
}

/// Reference to a single endpoint instance: a singular endpoint (`index`
/// `None`) or one member of a family, selected by an index expression.
/// This is the target form of confined evaluation in projected programs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfineTarget {
    pub sort: String,
    pub index: Option<Box<Expr>>,
}

/// Expression variants. Serialized with a `"kind"` discriminator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ExprKind {
    Var { name: String },
    IntLit { value: BigInt },
    BoolLit { value: bool },
    /// Fractional permission amount, written `num\den`.
    FracLit { num: BigInt, den: BigInt },
    This,
    FieldAccess { base: Box<Expr>, field: String },
    /// Sequence or family indexing, `base[index]`.
    SeqIndex { base: Box<Expr>, index: Box<Expr> },
    BinOp { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// Application of a declared pure or heap function, optionally with a
    /// receiver (`recv.f(args)`). `heap_fn` is set during name resolution.
    FnCall { recv: Option<Box<Expr>>, name: String, args: Vec<Expr>, heap_fn: bool },
    /// `Perm(loc, amount)` — fractional permission to a heap location.
    Perm { place: Box<Expr>, amount: Box<Expr> },
    /// Separating conjunction `lhs ** rhs`.
    SepConj { lhs: Box<Expr>, rhs: Box<Expr> },
    /// Application of a declared resource predicate.
    PredApply { name: String, args: Vec<Expr> },
    /// `(\endpoint α; body)` — body holds at (each instance of) the target.
    EndpointExpr { target: EndpointTarget, body: Box<Expr> },
    /// `(\chor body)` — body refers to global choreography state.
    ChorExpr { body: Box<Expr> },
    /// Channel invariant placeholders.
    Msg,
    Sender,
    Receiver,
    /// `(\forall v := lo .. hi; body)` — bounded integer quantification.
    Forall { binder: String, lo: Box<Expr>, hi: Box<Expr>, body: Box<Expr> },
    /// Quantified permission `(\forall* T v := lo .. hi; body)`. Parsed and
    /// printed, but rejected by both projections.
    QuantPerm { binder: String, ty: Type, lo: Box<Expr>, hi: Box<Expr>, body: Box<Expr> },
    /// Evaluation of `body` restricted to the memory of one endpoint
    /// instance. Never produced by the parser; projections introduce it.
    Confined { target: ConfineTarget, body: Box<Expr> },
}

/// Where a statement or expression points: one endpoint, one family member,
/// or a whole indexed slice of a family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EndpointTarget {
    Singular { name: String },
    FamilyIndex { family: String, index: Box<Expr> },
    FamilyRange { family: String, binder: String, lo: Box<Expr>, hi: Box<Expr> },
}

impl EndpointTarget {
    /// The sort of the target: `sort(e) = e`, `sort(F[i]) = F`,
    /// `sort(F[i := lo .. hi]) = F`.
    pub fn sort(&self) -> SortTag {
        match self {
            EndpointTarget::Singular { name } => SortTag(name.clone()),
            EndpointTarget::FamilyIndex { family, .. } => SortTag(family.clone()),
            EndpointTarget::FamilyRange { family, .. } => SortTag(family.clone()),
        }
    }

    /// Whether this target denotes a single instance (`e` or `F[i]`).
    pub fn is_instance(&self) -> bool {
        !matches!(self, EndpointTarget::FamilyRange { .. })
    }

    /// May `self` and `r` refer to an overlapping set of instances?
    ///
    /// Index expressions involve parameters, so the test is conservative:
    /// [`Coverage::No`] exactly when the sorts differ, [`Coverage::Maybe`]
    /// otherwise. `r` is expected to be an instance target (`e` or `F[i]`);
    /// the function is total and applies the same sort test regardless.
    pub fn covers(&self, r: &EndpointTarget) -> Coverage {
        if self.sort() == r.sort() {
            Coverage::Maybe
        } else {
            Coverage::No
        }
    }
}

/// Contract attached to methods, constructors, functions, `run`, and `par`.
/// Multiple `requires`/`ensures` clauses are kept in source order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Contract {
    pub requires: Vec<Expr>,
    pub ensures: Vec<Expr>,
}

impl Contract {
    pub fn is_empty(&self) -> bool {
        self.requires.is_empty() && self.ensures.is_empty()
    }

    /// All `requires` clauses joined with `**` (empty list ⇒ `true`).
    pub fn pre(&self) -> Expr {
        Expr::sep_all(self.requires.clone())
    }

    /// All `ensures` clauses joined with `**` (empty list ⇒ `true`).
    pub fn post(&self) -> Expr {
        Expr::sep_all(self.ensures.clone())
    }
}

/// A field declaration inside a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub ty: Type,
    pub name: String,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

/// A statement in a method (or constructor) body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodStmt {
    #[serde(flatten)]
    pub kind: MethodStmtKind,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MethodStmtKind {
    Assert { expr: Expr },
    Inhale { expr: Expr },
    Exhale { expr: Expr },
    Assign { dest: Expr, value: Expr },
    Call { recv: Expr, method: String, args: Vec<Expr> },
    If { cond: Expr, then_branch: Vec<MethodStmt>, else_branch: Vec<MethodStmt> },
    While { invariants: Vec<Expr>, cond: Expr, body: Vec<MethodStmt> },
    /// `par (T v = lo .. hi) { body }` — iterations must have disjoint
    /// footprints; the contract is checked per iteration.
    Par { contract: Contract, ty: Type, binder: String, lo: Expr, hi: Expr, body: Vec<MethodStmt> },
}

/// A parameter `T name`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub ty: Type,
    pub name: String,
}

/// A method declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDecl {
    pub contract: Contract,
    pub ret: Type,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<MethodStmt>,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

/// A constructor declaration. A class without one gets the implicit
/// zero-parameter constructor that leaves fields at their type defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtorDecl {
    pub contract: Contract,
    pub params: Vec<Param>,
    pub body: Vec<MethodStmt>,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

/// A class declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDecl {
    pub name: String,
    pub fields: Vec<FieldDecl>,
    pub ctor: Option<CtorDecl>,
    pub methods: Vec<MethodDecl>,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// `resource P(params) = body;`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Expr,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

/// `pure T f(params) = body;` — `heap` marks heap-reading functions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub contract: Contract,
    pub ret: Type,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Expr,
    pub heap: bool,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

/// An endpoint declaration inside a choreography.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EndpointDecl {
    Singular {
        name: String,
        class: String,
        args: Vec<Expr>,
        #[serde(rename = "loc", default)]
        span: Span,
    },
    /// `endpoint F[v := 0 .. size] = C(args);` — `args` may mention `v`,
    /// so each member can be seeded individually.
    Family {
        name: String,
        binder: String,
        size: Expr,
        class: String,
        args: Vec<Expr>,
        #[serde(rename = "loc", default)]
        span: Span,
    },
}

impl EndpointDecl {
    pub fn name(&self) -> &str {
        match self {
            EndpointDecl::Singular { name, .. } => name,
            EndpointDecl::Family { name, .. } => name,
        }
    }

    pub fn class(&self) -> &str {
        match self {
            EndpointDecl::Singular { class, .. } => class,
            EndpointDecl::Family { class, .. } => class,
        }
    }

    pub fn is_family(&self) -> bool {
        matches!(self, EndpointDecl::Family { .. })
    }
}

/// The statement an `endpoint α: ...` line performs at its target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EpAction {
    Assign { dest: Expr, value: Expr },
    Call { recv: Expr, method: String, args: Vec<Expr> },
}

/// A choreographic statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChorStmt {
    #[serde(flatten)]
    pub kind: ChorStmtKind,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ChorStmtKind {
    If { cond: Expr, then_branch: Vec<ChorStmt>, else_branch: Vec<ChorStmt> },
    While { invariants: Vec<Expr>, cond: Expr, body: Vec<ChorStmt> },
    Assert { expr: Expr },
    /// `endpoint α: action`
    Endpoint { target: EndpointTarget, action: EpAction },
    /// `channel_invariant I; communicate sender: msg -> receiver: loc;`
    Communicate {
        invariant: Option<Expr>,
        sender: EndpointTarget,
        msg: Expr,
        receiver: EndpointTarget,
        dest: Expr,
    },
}

/// The `run` block of a choreography.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunDecl {
    pub contract: Contract,
    pub body: Vec<ChorStmt>,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

/// A choreography declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choreography {
    pub contract: Contract,
    pub name: String,
    pub params: Vec<Param>,
    pub endpoints: Vec<EndpointDecl>,
    pub run: RunDecl,
    #[serde(rename = "loc", default)]
    pub span: Span,
}

impl Choreography {
    pub fn endpoint(&self, name: &str) -> Option<&EndpointDecl> {
        self.endpoints.iter().find(|e| e.name() == name)
    }

    /// All declared sorts, in declaration order.
    pub fn sorts(&self) -> Vec<SortTag> {
        self.endpoints.iter().map(|e| SortTag(e.name().to_string())).collect()
    }
}

/// Top-level declarations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Decl {
    Class(ClassDecl),
    Predicate(PredicateDecl),
    Function(FunctionDecl),
    Choreography(Choreography),
}

/// A parsed program: pass-through pragma lines plus declarations.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Program {
    #[serde(default)]
    pub pragmas: Vec<String>,
    pub decls: Vec<Decl>,
}

/// Identifies a contract-bearing callee for [`Program::contract_pre`] /
/// [`Program::contract_post`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CalleeRef {
    Method { class: String, method: String },
    /// The class's constructor contract (implicit constructor ⇒ empty).
    Constructor { class: String },
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.decls.iter().find_map(|d| match d {
            Decl::Class(c) if c.name == name => Some(c),
            _ => None,
        })
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.decls.iter().find_map(|d| match d {
            Decl::Predicate(p) if p.name == name => Some(p),
            _ => None,
        })
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.decls.iter().find_map(|d| match d {
            Decl::Function(f) if f.name == name => Some(f),
            _ => None,
        })
    }

    /// The single choreography, if the program has exactly one.
    pub fn choreography(&self) -> Option<&Choreography> {
        let mut found = None;
        for d in &self.decls {
            if let Decl::Choreography(c) = d {
                if found.is_some() {
                    return None;
                }
                found = Some(c);
            }
        }
        found
    }

    fn callee_contract(&self, callee: &CalleeRef) -> Result<(&Contract, &[Param]), String> {
        match callee {
            CalleeRef::Method { class, method } => {
                let c = self.class(class).ok_or_else(|| format!("unknown class `{class}`"))?;
                let m = c
                    .method(method)
                    .ok_or_else(|| format!("class `{class}` has no method `{method}`"))?;
                Ok((&m.contract, &m.params))
            }
            CalleeRef::Constructor { class } => {
                let c = self.class(class).ok_or_else(|| format!("unknown class `{class}`"))?;
                match &c.ctor {
                    Some(ct) => Ok((&ct.contract, &ct.params)),
                    None => Ok((Contract::empty_ref(), &[])),
                }
            }
        }
    }

    /// The callee's precondition with `this` replaced by `receiver`.
    ///
    /// Fails if the callee is unknown or if `receiver` mentions one of the
    /// callee's parameter names (which would be captured once arguments are
    /// substituted at the call site).
    pub fn contract_pre(&self, callee: &CalleeRef, receiver: &Expr) -> Result<Expr, String> {
        let (contract, params) = self.callee_contract(callee)?;
        check_receiver_capture(receiver, params)?;
        Ok(crate::subst::subst_this(&contract.pre(), receiver))
    }

    /// The callee's postcondition with `this` replaced by `receiver`.
    pub fn contract_post(&self, callee: &CalleeRef, receiver: &Expr) -> Result<Expr, String> {
        let (contract, params) = self.callee_contract(callee)?;
        check_receiver_capture(receiver, params)?;
        Ok(crate::subst::subst_this(&contract.post(), receiver))
    }
}

impl Contract {
    fn empty_ref() -> &'static Contract {
        static EMPTY: std::sync::OnceLock<Contract> = std::sync::OnceLock::new();
        EMPTY.get_or_init(Contract::default)
    }
}

fn check_receiver_capture(receiver: &Expr, params: &[Param]) -> Result<(), String> {
    let free = receiver.free_vars();
    for p in params {
        if free.contains(&p.name) {
            return Err(format!(
                "receiver expression mentions callee parameter `{}`; rename one of them",
                p.name
            ));
        }
    }
    Ok(())
}

/// The sorts that occur as statement participants anywhere in `stmts`
/// (assignment/call targets and both ends of communications; condition and
/// invariant sorts are not participants).
pub fn participant_sorts(stmts: &[ChorStmt]) -> BTreeSet<SortTag> {
    let mut out = BTreeSet::new();
    collect_participants(stmts, &mut out);
    out
}

fn collect_participants(stmts: &[ChorStmt], out: &mut BTreeSet<SortTag>) {
    for s in stmts {
        match &s.kind {
            ChorStmtKind::If { then_branch, else_branch, .. } => {
                collect_participants(then_branch, out);
                collect_participants(else_branch, out);
            }
            ChorStmtKind::While { body, .. } => collect_participants(body, out),
            ChorStmtKind::Assert { .. } => {}
            ChorStmtKind::Endpoint { target, .. } => {
                out.insert(target.sort());
            }
            ChorStmtKind::Communicate { sender, receiver, .. } => {
                out.insert(sender.sort());
                out.insert(receiver.sort());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range_target() -> EndpointTarget {
        EndpointTarget::FamilyRange {
            family: "F".into(),
            binder: "i".into(),
            lo: Box::new(Expr::int(2)),
            hi: Box::new(Expr::var("n")),
        }
    }

    #[test]
    fn sort_of_singular() {
        let t = EndpointTarget::Singular { name: "e".into() };
        assert_eq!(t.sort(), SortTag("e".into()));
    }

    #[test]
    fn sort_of_family_index() {
        let t = EndpointTarget::FamilyIndex { family: "F".into(), index: Box::new(Expr::var("i")) };
        assert_eq!(t.sort(), SortTag("F".into()));
    }

    #[test]
    fn sort_of_family_range() {
        assert_eq!(range_target().sort(), SortTag("F".into()));
    }

    #[test]
    fn covers_is_no_exactly_on_sort_mismatch() {
        let a = range_target();
        let same =
            EndpointTarget::FamilyIndex { family: "F".into(), index: Box::new(Expr::var("j")) };
        let other =
            EndpointTarget::FamilyIndex { family: "G".into(), index: Box::new(Expr::var("j")) };
        let sing = EndpointTarget::Singular { name: "F".into() };
        assert_eq!(a.covers(&same), Coverage::Maybe);
        assert_eq!(a.covers(&other), Coverage::No);
        // Same name as the family: same sort, hence Maybe.
        assert_eq!(a.covers(&sing), Coverage::Maybe);
    }

    /// Enumeration oracle: for every valuation of a small parameter space,
    /// targets of different sorts denote disjoint instance sets, so `No` is
    /// sound; same-sort targets can collide, so `Maybe` is the only safe
    /// answer a syntactic test can give.
    #[test]
    fn covers_no_is_sound_under_enumeration() {
        // alpha = F[i := 0 .. n], r = G[k]: for all n in 0..=4, all k in 0..n,
        // the member sets {F#0..F#n-1} and {G#k} never intersect.
        for n in 0..=4i64 {
            for k in 0..n.max(1) {
                let alpha_members: Vec<(String, i64)> =
                    (0..n).map(|i| ("F".to_string(), i)).collect();
                let r_member = ("G".to_string(), k);
                assert!(!alpha_members.contains(&r_member));
            }
        }
        // Same sort: F[2 .. n] vs F[0] overlaps for no n, but F[2 .. n] vs
        // F[2] overlaps whenever n > 2 — a syntactic test cannot separate
        // these, which is exactly why sort equality answers Maybe.
        let lo = 2i64;
        let mut some_overlap = false;
        let mut some_disjoint = false;
        for n in 0..=4i64 {
            let members: Vec<i64> = (lo..n).collect();
            if members.contains(&2) {
                some_overlap = true;
            }
            if !members.contains(&0) {
                some_disjoint = true;
            }
        }
        assert!(some_overlap && some_disjoint);
    }

    #[test]
    fn purity_levels() {
        // i + 1 is pure
        let e = Expr::bin(BinOp::Add, Expr::var("i"), Expr::int(1));
        assert_eq!(e.level(), PurityLevel::Pure);
        // a.x is heap
        let h = Expr::synth(ExprKind::FieldAccess {
            base: Box::new(Expr::var("a")),
            field: "x".into(),
        });
        assert_eq!(h.level(), PurityLevel::Heap);
        // Perm(a.x, 1\2) is resource
        let r = Expr::synth(ExprKind::Perm {
            place: Box::new(h.clone()),
            amount: Box::new(Expr::synth(ExprKind::FracLit { num: 1.into(), den: 2.into() })),
        });
        assert_eq!(r.level(), PurityLevel::Resource);
        // a.x > 0 && i < n is heap
        let c = Expr::and(Expr::bin(BinOp::Gt, h, Expr::int(0)), {
            Expr::bin(BinOp::Lt, Expr::var("i"), Expr::var("n"))
        });
        assert_eq!(c.level(), PurityLevel::Heap);
        // (\endpoint a; true) is chor-level
        let ep = Expr::synth(ExprKind::EndpointExpr {
            target: EndpointTarget::Singular { name: "a".into() },
            body: Box::new(Expr::bool(true)),
        });
        assert_eq!(ep.level(), PurityLevel::Chor);
    }

    #[test]
    fn and_drops_literal_true() {
        let x = Expr::var("x");
        assert_eq!(Expr::and(Expr::bool(true), x.clone()), x);
        assert_eq!(Expr::and(x.clone(), Expr::bool(true)), x);
        assert_eq!(Expr::and_all(vec![]), Expr::bool(true));
        assert_eq!(
            Expr::and_all(vec![Expr::bool(true), x.clone(), Expr::bool(true)]),
            x
        );
    }

    #[test]
    fn free_vars_respect_binders() {
        // (\forall i := 0 .. n; F[i].x > j) — free: n, F, j
        let body = Expr::bin(
            BinOp::Gt,
            Expr::synth(ExprKind::FieldAccess {
                base: Box::new(Expr::synth(ExprKind::SeqIndex {
                    base: Box::new(Expr::var("F")),
                    index: Box::new(Expr::var("i")),
                })),
                field: "x".into(),
            }),
            Expr::var("j"),
        );
        let q = Expr::synth(ExprKind::Forall {
            binder: "i".into(),
            lo: Box::new(Expr::int(0)),
            hi: Box::new(Expr::var("n")),
            body: Box::new(body),
        });
        let fv = q.free_vars();
        assert!(fv.contains("n") && fv.contains("F") && fv.contains("j"));
        assert!(!fv.contains("i"));
    }

    #[test]
    fn contract_instantiation_rejects_capture() {
        // class C { int x; requires v > 0; ensures true; int m(int v) {} }
        let method = MethodDecl {
            contract: Contract {
                requires: vec![Expr::bin(BinOp::Gt, Expr::var("v"), Expr::int(0))],
                ensures: vec![],
            },
            ret: Type::Int,
            name: "m".into(),
            params: vec![Param { ty: Type::Int, name: "v".into() }],
            body: vec![],
            span: Span::default(),
        };
        let class = ClassDecl {
            name: "C".into(),
            fields: vec![],
            ctor: None,
            methods: vec![method],
            span: Span::default(),
        };
        let prog = Program { pragmas: vec![], decls: vec![Decl::Class(class)] };
        let callee = CalleeRef::Method { class: "C".into(), method: "m".into() };
        // Receiver F[v] mentions the parameter v: error.
        let bad = Expr::synth(ExprKind::SeqIndex {
            base: Box::new(Expr::var("F")),
            index: Box::new(Expr::var("v")),
        });
        assert!(prog.contract_pre(&callee, &bad).is_err());
        // Receiver F[i] is fine.
        let good = Expr::synth(ExprKind::SeqIndex {
            base: Box::new(Expr::var("F")),
            index: Box::new(Expr::var("i")),
        });
        assert!(prog.contract_pre(&callee, &good).is_ok());
    }
}
