//! The sequential verification program produced by choreographic projection.
//!
//! The program has a `setup` phase that allocates every endpoint instance and
//! a `body` of instrumented statements. Heap effects of the original
//! choreography appear inside [`VStmt::Confined`] regions naming the instance
//! whose memory they may touch; communications appear as an
//! [`VStmt::Exhale`]/[`VStmt::Inhale`] pair over the channel invariant; the
//! dynamic checks (unanimity, injectivity, loop invariants, contracts, `par`
//! iteration contracts) appear as [`VStmt::Assert`] nodes tagged with a
//! [`CheckKind`].

use crate::ast::{ConfineTarget, EndpointTarget, Expr, Param};
use crate::frontend::pretty::{expr_to_string, type_to_string};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// One endpoint instance: a singular endpoint, or one member of a family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRef {
    pub sort: String,
    /// `None` for singular endpoints; the member index otherwise.
    pub index: Option<Expr>,
}

impl InstanceRef {
    pub fn singular(sort: impl Into<String>) -> Self {
        InstanceRef { sort: sort.into(), index: None }
    }

    pub fn indexed(sort: impl Into<String>, index: Expr) -> Self {
        InstanceRef { sort: sort.into(), index: Some(index) }
    }

    /// Instance denoted by a target; `None` when the target is a range.
    pub fn from_target(t: &EndpointTarget) -> Option<Self> {
        match t {
            EndpointTarget::Singular { name } => Some(InstanceRef::singular(name.clone())),
            EndpointTarget::FamilyIndex { family, index } => {
                Some(InstanceRef::indexed(family.clone(), (**index).clone()))
            }
            EndpointTarget::FamilyRange { .. } => None,
        }
    }

    pub fn to_confine(&self) -> ConfineTarget {
        ConfineTarget {
            sort: self.sort.clone(),
            index: self.index.clone().map(Box::new),
        }
    }
}

impl fmt::Display for InstanceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.index {
            None => f.write_str(&self.sort),
            Some(ix) => write!(f, "{}[{}]", self.sort, expr_to_string(ix)),
        }
    }
}

/// Why an [`VStmt::Assert`] exists. Failure reports carry this tag so a test
/// can pinpoint which check tripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckKind {
    /// A user-written `assert`.
    Plain,
    /// All mentioned instances evaluate a branch/loop condition alike.
    Unanimity,
    /// The receiver index map of a ranged communication is injective.
    Injectivity,
    /// A loop invariant, checked at entry and after every iteration.
    LoopInvariant,
    /// A `par` iteration's precondition.
    ParPre,
    /// A `par` iteration's postcondition.
    ParPost,
    /// A contract precondition (method, constructor, `run`, or program).
    ContractPre,
    /// A contract postcondition.
    ContractPost,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Plain => "plain",
            CheckKind::Unanimity => "unanimity",
            CheckKind::Injectivity => "injectivity",
            CheckKind::LoopInvariant => "loop-invariant",
            CheckKind::ParPre => "par-pre",
            CheckKind::ParPost => "par-post",
            CheckKind::ContractPre => "contract-pre",
            CheckKind::ContractPost => "contract-post",
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Identifies one communication statement and the two instances it connects,
/// for pairing an exhale with the matching inhale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelUse {
    /// Communication site: position of the `communicate` statement in a
    /// pre-order walk of the run body.
    pub site: usize,
    pub sender: InstanceRef,
    pub receiver: InstanceRef,
}

impl fmt::Display for ChannelUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chan[{}]({} -> {})", self.site, self.sender, self.receiver)
    }
}

/// Allocation of the endpoint instances, run before the body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SetupStmt {
    /// `name := new class(args);`
    Singular { name: String, class: String, args: Vec<Expr> },
    /// Allocate members `0 .. size` of the family; member `binder := k` is
    /// constructed with `args[binder := k]`, in ascending order.
    Family { name: String, binder: String, size: Expr, class: String, args: Vec<Expr> },
}

/// A statement of the verification program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum VStmt {
    /// Bind a fresh local to `value`, evaluated confined to `at`.
    Let { name: String, at: InstanceRef, value: Expr },
    /// Heap assignment; only legal inside a [`VStmt::Confined`] region.
    Assign { dest: Expr, value: Expr },
    Assert { check: CheckKind, label: String, expr: Expr },
    /// Give up `resource`, charged to the holdings of `at`. A `chan` links
    /// the transfer to the matching [`VStmt::Inhale`].
    Exhale { at: InstanceRef, chan: Option<ChannelUse>, resource: Expr },
    /// Acquire `resource` at `at`, taken from the transfer `chan` recorded
    /// by the matching [`VStmt::Exhale`].
    Inhale { at: InstanceRef, chan: Option<ChannelUse>, resource: Expr },
    If { cond: Expr, then_branch: Vec<VStmt>, else_branch: Vec<VStmt> },
    While { invariants: Vec<Expr>, cond: Expr, body: Vec<VStmt> },
    /// Dynamically-bound call; the receiver's class decides the body.
    MethodCall { recv: Expr, method: String, args: Vec<Expr> },
    /// Sequential stand-in for parallel iterations `binder := lo .. hi`:
    /// `requires`/`ensures` are asserted per iteration and iteration
    /// footprints must be pairwise disjoint.
    Par {
        binder: String,
        lo: Expr,
        hi: Expr,
        requires: Expr,
        ensures: Expr,
        body: Vec<VStmt>,
    },
    /// Heap accesses in `body` may only touch `target`'s memory.
    Confined { target: InstanceRef, body: Vec<VStmt> },
}

/// The projected sequential program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationProgram {
    /// Name of the source choreography.
    pub name: String,
    pub params: Vec<Param>,
    pub setup: Vec<SetupStmt>,
    pub body: Vec<VStmt>,
    /// `(class, method)` pairs reachable from endpoint statements, i.e. the
    /// contracts the body exercises.
    pub called_methods: BTreeSet<(String, String)>,
}

impl VerificationProgram {
    /// Render as indented text (display-only; there is no parser for it).
    pub fn to_text(&self) -> String {
        let mut w = TextWriter { out: String::new(), depth: 0 };
        let params = self
            .params
            .iter()
            .map(|p| format!("{} {}", type_to_string(&p.ty), p.name))
            .collect::<Vec<_>>()
            .join(", ");
        w.line(&format!("verification {}({params}) {{", self.name));
        w.depth += 1;
        w.line("setup {");
        w.depth += 1;
        for s in &self.setup {
            match s {
                SetupStmt::Singular { name, class, args } => {
                    w.line(&format!("{name} := new {class}({});", exprs(args)));
                }
                SetupStmt::Family { name, binder, size, class, args } => {
                    w.line(&format!(
                        "{name}[{binder} := 0 .. {}] := new {class}({});",
                        expr_to_string(size),
                        exprs(args)
                    ));
                }
            }
        }
        w.depth -= 1;
        w.line("}");
        w.line("body {");
        w.depth += 1;
        for s in &self.body {
            w.vstmt(s);
        }
        w.depth -= 1;
        w.line("}");
        w.depth -= 1;
        w.line("}");
        w.out
    }

    /// Walk every statement, depth-first.
    pub fn walk(&self, f: &mut impl FnMut(&VStmt)) {
        fn go(stmts: &[VStmt], f: &mut impl FnMut(&VStmt)) {
            for s in stmts {
                f(s);
                match s {
                    VStmt::If { then_branch, else_branch, .. } => {
                        go(then_branch, f);
                        go(else_branch, f);
                    }
                    VStmt::While { body, .. }
                    | VStmt::Par { body, .. }
                    | VStmt::Confined { body, .. } => go(body, f),
                    _ => {}
                }
            }
        }
        go(&self.body, f);
    }
}

fn exprs(args: &[Expr]) -> String {
    args.iter().map(expr_to_string).collect::<Vec<_>>().join(", ")
}

struct TextWriter {
    out: String,
    depth: usize,
}

impl TextWriter {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn block(&mut self, head: &str, body: &[VStmt]) {
        self.line(head);
        self.depth += 1;
        for s in body {
            self.vstmt(s);
        }
        self.depth -= 1;
        self.line("}");
    }

    fn vstmt(&mut self, s: &VStmt) {
        match s {
            VStmt::Let { name, at, value } => {
                self.line(&format!("let {name} := {} @ {at};", expr_to_string(value)));
            }
            VStmt::Assign { dest, value } => {
                self.line(&format!("{} := {};", expr_to_string(dest), expr_to_string(value)));
            }
            VStmt::Assert { check, label, expr } => {
                let tag = if label.is_empty() {
                    format!("{{{check}}}")
                } else {
                    format!("{{{check}: {label}}}")
                };
                let tag = if *check == CheckKind::Plain && label.is_empty() {
                    String::new()
                } else {
                    format!("{tag} ")
                };
                self.line(&format!("assert {tag}{};", expr_to_string(expr)));
            }
            VStmt::Exhale { at, chan, resource } => {
                let via = chan.as_ref().map(|c| format!(" via {c}")).unwrap_or_default();
                self.line(&format!("exhale {} @ {at}{via};", expr_to_string(resource)));
            }
            VStmt::Inhale { at, chan, resource } => {
                let via = chan.as_ref().map(|c| format!(" via {c}")).unwrap_or_default();
                self.line(&format!("inhale {} @ {at}{via};", expr_to_string(resource)));
            }
            VStmt::If { cond, then_branch, else_branch } => {
                self.line(&format!("if ({}) {{", expr_to_string(cond)));
                self.depth += 1;
                for t in then_branch {
                    self.vstmt(t);
                }
                self.depth -= 1;
                if else_branch.is_empty() {
                    self.line("}");
                } else {
                    self.line("} else {");
                    self.depth += 1;
                    for t in else_branch {
                        self.vstmt(t);
                    }
                    self.depth -= 1;
                    self.line("}");
                }
            }
            VStmt::While { invariants, cond, body } => {
                for inv in invariants {
                    self.line(&format!("loop_invariant {};", expr_to_string(inv)));
                }
                self.block(&format!("while ({}) {{", expr_to_string(cond)), body);
            }
            VStmt::MethodCall { recv, method, args } => {
                self.line(&format!("call {}.{method}({});", expr_to_string(recv), exprs(args)));
            }
            VStmt::Par { binder, lo, hi, requires, ensures, body } => {
                self.line(&format!("requires {};", expr_to_string(requires)));
                self.line(&format!("ensures {};", expr_to_string(ensures)));
                self.block(
                    &format!(
                        "par ({binder} := {} .. {}) {{",
                        expr_to_string(lo),
                        expr_to_string(hi)
                    ),
                    body,
                );
            }
            VStmt::Confined { target, body } => {
                self.block(&format!("confined {target} {{"), body);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Type;

    #[test]
    fn text_rendering_is_stable() {
        let prog = VerificationProgram {
            name: "T".into(),
            params: vec![Param { ty: Type::Int, name: "n".into() }],
            setup: vec![SetupStmt::Singular {
                name: "a".into(),
                class: "Cell".into(),
                args: vec![Expr::int(0)],
            }],
            body: vec![
                VStmt::Assert {
                    check: CheckKind::Unanimity,
                    label: "if".into(),
                    expr: Expr::bool(true),
                },
                VStmt::Confined {
                    target: InstanceRef::singular("a"),
                    body: vec![VStmt::Assign {
                        dest: Expr::synth(crate::ast::ExprKind::FieldAccess {
                            base: Box::new(Expr::var("a")),
                            field: "x".into(),
                        }),
                        value: Expr::int(1),
                    }],
                },
            ],
            called_methods: BTreeSet::new(),
        };
        let text = prog.to_text();
        assert!(text.contains("verification T(int n) {"), "{text}");
        assert!(text.contains("a := new Cell(0);"), "{text}");
        assert!(text.contains("assert {unanimity: if} true;"), "{text}");
        assert!(text.contains("confined a {"), "{text}");
        assert!(text.contains("a.x := 1;"), "{text}");
        assert_eq!(text, prog.to_text());
    }

    #[test]
    fn walk_visits_nested_statements() {
        let prog = VerificationProgram {
            name: "T".into(),
            params: vec![],
            setup: vec![],
            body: vec![VStmt::Par {
                binder: "i".into(),
                lo: Expr::int(0),
                hi: Expr::var("n"),
                requires: Expr::bool(true),
                ensures: Expr::bool(true),
                body: vec![VStmt::Assert {
                    check: CheckKind::Plain,
                    label: String::new(),
                    expr: Expr::bool(true),
                }],
            }],
            called_methods: BTreeSet::new(),
        };
        let mut n = 0;
        prog.walk(&mut |_| n += 1);
        assert_eq!(n, 2);
    }
}
