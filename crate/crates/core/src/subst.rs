//! Capture-avoiding substitution over expressions.
//!
//! Three substitutions cover everything the projections need: `this` →
//! receiver (contract instantiation), variable → expression (range and
//! quantifier instantiation), and the channel-invariant placeholders
//! (`\msg`, `\sender`, `\receiver`) → concrete expressions.

use crate::ast::{EndpointTarget, Expr, ExprKind};
use std::collections::BTreeSet;

/// Replace every `this` in `expr` by `receiver`.
pub fn subst_this(expr: &Expr, receiver: &Expr) -> Expr {
    transform(expr, &mut |e| match &e.kind {
        ExprKind::This => Some(receiver.clone()),
        _ => None,
    })
}

/// Replace every free occurrence of the variable `name` by `replacement`,
/// renaming quantifier and range binders where they would capture a free
/// variable of `replacement`.
pub fn subst_var(expr: &Expr, name: &str, replacement: &Expr) -> Expr {
    let free_in_replacement = replacement.free_vars();
    subst_var_inner(expr, name, replacement, &free_in_replacement)
}

/// Instantiate the channel-invariant placeholders.
pub fn subst_placeholders(expr: &Expr, msg: &Expr, sender: &Expr, receiver: &Expr) -> Expr {
    transform(expr, &mut |e| match &e.kind {
        ExprKind::Msg => Some(msg.clone()),
        ExprKind::Sender => Some(sender.clone()),
        ExprKind::Receiver => Some(receiver.clone()),
        _ => None,
    })
}

/// A name based on `base` that does not occur in `used`.
pub fn fresh_name(base: &str, used: &BTreeSet<String>) -> String {
    if !used.contains(base) {
        return base.to_string();
    }
    for k in 1u32.. {
        let candidate = format!("{base}{k}");
        if !used.contains(&candidate) {
            return candidate;
        }
    }
    unreachable!()
}

/// An expression denoting the instance a target refers to: `e` becomes the
/// endpoint reference `e`, `F[ix]` becomes the family indexing `F[ix]`.
/// Range targets have no single instance, so they are not accepted here.
pub fn target_to_expr(target: &EndpointTarget) -> Expr {
    match target {
        EndpointTarget::Singular { name } => Expr::var(name.clone()),
        EndpointTarget::FamilyIndex { family, index } => Expr::synth(ExprKind::SeqIndex {
            base: Box::new(Expr::var(family.clone())),
            index: index.clone(),
        }),
        EndpointTarget::FamilyRange { .. } => {
            panic!("target_to_expr: range target has no single instance")
        }
    }
}

fn subst_var_inner(
    expr: &Expr,
    name: &str,
    replacement: &Expr,
    free_in_replacement: &BTreeSet<String>,
) -> Expr {
    let kind = match &expr.kind {
        ExprKind::Var { name: n } if n == name => return replacement.clone(),
        ExprKind::Var { .. }
        | ExprKind::IntLit { .. }
        | ExprKind::BoolLit { .. }
        | ExprKind::FracLit { .. }
        | ExprKind::This
        | ExprKind::Msg
        | ExprKind::Sender
        | ExprKind::Receiver => expr.kind.clone(),
        ExprKind::FieldAccess { base, field } => ExprKind::FieldAccess {
            base: Box::new(subst_var_inner(base, name, replacement, free_in_replacement)),
            field: field.clone(),
        },
        ExprKind::SeqIndex { base, index } => ExprKind::SeqIndex {
            base: Box::new(subst_var_inner(base, name, replacement, free_in_replacement)),
            index: Box::new(subst_var_inner(index, name, replacement, free_in_replacement)),
        },
        ExprKind::BinOp { op, lhs, rhs } => ExprKind::BinOp {
            op: *op,
            lhs: Box::new(subst_var_inner(lhs, name, replacement, free_in_replacement)),
            rhs: Box::new(subst_var_inner(rhs, name, replacement, free_in_replacement)),
        },
        ExprKind::SepConj { lhs, rhs } => ExprKind::SepConj {
            lhs: Box::new(subst_var_inner(lhs, name, replacement, free_in_replacement)),
            rhs: Box::new(subst_var_inner(rhs, name, replacement, free_in_replacement)),
        },
        ExprKind::FnCall { recv, name: f, args, heap_fn } => ExprKind::FnCall {
            recv: recv
                .as_ref()
                .map(|r| Box::new(subst_var_inner(r, name, replacement, free_in_replacement))),
            name: f.clone(),
            args: args
                .iter()
                .map(|a| subst_var_inner(a, name, replacement, free_in_replacement))
                .collect(),
            heap_fn: *heap_fn,
        },
        ExprKind::Perm { place, amount } => ExprKind::Perm {
            place: Box::new(subst_var_inner(place, name, replacement, free_in_replacement)),
            amount: Box::new(subst_var_inner(amount, name, replacement, free_in_replacement)),
        },
        ExprKind::PredApply { name: p, args } => ExprKind::PredApply {
            name: p.clone(),
            args: args
                .iter()
                .map(|a| subst_var_inner(a, name, replacement, free_in_replacement))
                .collect(),
        },
        ExprKind::Forall { binder, lo, hi, body } => {
            let lo = Box::new(subst_var_inner(lo, name, replacement, free_in_replacement));
            let hi = Box::new(subst_var_inner(hi, name, replacement, free_in_replacement));
            let (binder, body) =
                subst_under_binder(binder, body, name, replacement, free_in_replacement);
            ExprKind::Forall { binder, lo, hi, body: Box::new(body) }
        }
        ExprKind::QuantPerm { binder, ty, lo, hi, body } => {
            let lo = Box::new(subst_var_inner(lo, name, replacement, free_in_replacement));
            let hi = Box::new(subst_var_inner(hi, name, replacement, free_in_replacement));
            let (binder, body) =
                subst_under_binder(binder, body, name, replacement, free_in_replacement);
            ExprKind::QuantPerm { binder, ty: ty.clone(), lo, hi, body: Box::new(body) }
        }
        ExprKind::EndpointExpr { target, body } => match target {
            EndpointTarget::Singular { .. } => ExprKind::EndpointExpr {
                target: target.clone(),
                body: Box::new(subst_var_inner(body, name, replacement, free_in_replacement)),
            },
            EndpointTarget::FamilyIndex { family, index } => ExprKind::EndpointExpr {
                target: EndpointTarget::FamilyIndex {
                    family: family.clone(),
                    index: Box::new(subst_var_inner(
                        index,
                        name,
                        replacement,
                        free_in_replacement,
                    )),
                },
                body: Box::new(subst_var_inner(body, name, replacement, free_in_replacement)),
            },
            EndpointTarget::FamilyRange { family, binder, lo, hi } => {
                let lo = Box::new(subst_var_inner(lo, name, replacement, free_in_replacement));
                let hi = Box::new(subst_var_inner(hi, name, replacement, free_in_replacement));
                let (binder, body) =
                    subst_under_binder(binder, body, name, replacement, free_in_replacement);
                ExprKind::EndpointExpr {
                    target: EndpointTarget::FamilyRange {
                        family: family.clone(),
                        binder,
                        lo,
                        hi,
                    },
                    body: Box::new(body),
                }
            }
        },
        ExprKind::ChorExpr { body } => ExprKind::ChorExpr {
            body: Box::new(subst_var_inner(body, name, replacement, free_in_replacement)),
        },
        ExprKind::Confined { target, body } => ExprKind::Confined {
            target: crate::ast::ConfineTarget {
                sort: target.sort.clone(),
                index: target.index.as_ref().map(|ix| {
                    Box::new(subst_var_inner(ix, name, replacement, free_in_replacement))
                }),
            },
            body: Box::new(subst_var_inner(body, name, replacement, free_in_replacement)),
        },
    };
    Expr::new(kind, expr.span)
}

/// Substitute inside a binder scope, renaming the binder when it would
/// capture a free variable of the replacement. Returns the (possibly new)
/// binder name and the substituted body.
fn subst_under_binder(
    binder: &str,
    body: &Expr,
    name: &str,
    replacement: &Expr,
    free_in_replacement: &BTreeSet<String>,
) -> (String, Expr) {
    if binder == name {
        // The substituted variable is shadowed here; leave the body alone.
        return (binder.to_string(), body.clone());
    }
    if free_in_replacement.contains(binder) {
        // Rename the binder away from the replacement's free variables,
        // also avoiding anything already free in the body.
        let mut used = free_in_replacement.clone();
        used.extend(body.free_vars());
        used.insert(name.to_string());
        let new_binder = fresh_name(binder, &used);
        let renamed = subst_var(body, binder, &Expr::var(new_binder.clone()));
        let new_body = subst_var_inner(&renamed, name, replacement, free_in_replacement);
        return (new_binder, new_body);
    }
    (binder.to_string(), subst_var_inner(body, name, replacement, free_in_replacement))
}

/// Bottom-up rewriting helper: `f` returns `Some(replacement)` to replace a
/// node wholesale (children of replaced nodes are not revisited).
fn transform(expr: &Expr, f: &mut impl FnMut(&Expr) -> Option<Expr>) -> Expr {
    if let Some(replaced) = f(expr) {
        return replaced;
    }
    let kind = match &expr.kind {
        k @ (ExprKind::Var { .. }
        | ExprKind::IntLit { .. }
        | ExprKind::BoolLit { .. }
        | ExprKind::FracLit { .. }
        | ExprKind::This
        | ExprKind::Msg
        | ExprKind::Sender
        | ExprKind::Receiver) => k.clone(),
        ExprKind::FieldAccess { base, field } => ExprKind::FieldAccess {
            base: Box::new(transform(base, f)),
            field: field.clone(),
        },
        ExprKind::SeqIndex { base, index } => ExprKind::SeqIndex {
            base: Box::new(transform(base, f)),
            index: Box::new(transform(index, f)),
        },
        ExprKind::BinOp { op, lhs, rhs } => ExprKind::BinOp {
            op: *op,
            lhs: Box::new(transform(lhs, f)),
            rhs: Box::new(transform(rhs, f)),
        },
        ExprKind::SepConj { lhs, rhs } => ExprKind::SepConj {
            lhs: Box::new(transform(lhs, f)),
            rhs: Box::new(transform(rhs, f)),
        },
        ExprKind::FnCall { recv, name, args, heap_fn } => ExprKind::FnCall {
            recv: recv.as_ref().map(|r| Box::new(transform(r, f))),
            name: name.clone(),
            args: args.iter().map(|a| transform(a, f)).collect(),
            heap_fn: *heap_fn,
        },
        ExprKind::Perm { place, amount } => ExprKind::Perm {
            place: Box::new(transform(place, f)),
            amount: Box::new(transform(amount, f)),
        },
        ExprKind::PredApply { name, args } => ExprKind::PredApply {
            name: name.clone(),
            args: args.iter().map(|a| transform(a, f)).collect(),
        },
        ExprKind::Forall { binder, lo, hi, body } => ExprKind::Forall {
            binder: binder.clone(),
            lo: Box::new(transform(lo, f)),
            hi: Box::new(transform(hi, f)),
            body: Box::new(transform(body, f)),
        },
        ExprKind::QuantPerm { binder, ty, lo, hi, body } => ExprKind::QuantPerm {
            binder: binder.clone(),
            ty: ty.clone(),
            lo: Box::new(transform(lo, f)),
            hi: Box::new(transform(hi, f)),
            body: Box::new(transform(body, f)),
        },
        ExprKind::EndpointExpr { target, body } => ExprKind::EndpointExpr {
            target: match target {
                EndpointTarget::Singular { .. } => target.clone(),
                EndpointTarget::FamilyIndex { family, index } => EndpointTarget::FamilyIndex {
                    family: family.clone(),
                    index: Box::new(transform(index, f)),
                },
                EndpointTarget::FamilyRange { family, binder, lo, hi } => {
                    EndpointTarget::FamilyRange {
                        family: family.clone(),
                        binder: binder.clone(),
                        lo: Box::new(transform(lo, f)),
                        hi: Box::new(transform(hi, f)),
                    }
                }
            },
            body: Box::new(transform(body, f)),
        },
        ExprKind::ChorExpr { body } => ExprKind::ChorExpr { body: Box::new(transform(body, f)) },
        ExprKind::Confined { target, body } => ExprKind::Confined {
            target: crate::ast::ConfineTarget {
                sort: target.sort.clone(),
                index: target.index.as_ref().map(|ix| Box::new(transform(ix, f))),
            },
            body: Box::new(transform(body, f)),
        },
    };
    Expr::new(kind, expr.span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::BinOp;

    fn field(base: Expr, name: &str) -> Expr {
        Expr::synth(ExprKind::FieldAccess { base: Box::new(base), field: name.into() })
    }

    #[test]
    fn subst_this_in_contract() {
        // Perm(this.x, 1) ** this.x == v  with this := F[i]
        let this = Expr::synth(ExprKind::This);
        let pre = Expr::sep(
            Expr::synth(ExprKind::Perm {
                place: Box::new(field(this.clone(), "x")),
                amount: Box::new(Expr::int(1)),
            }),
            Expr::bin(BinOp::Eq, field(this, "x"), Expr::var("v")),
        );
        let recv = Expr::synth(ExprKind::SeqIndex {
            base: Box::new(Expr::var("F")),
            index: Box::new(Expr::var("i")),
        });
        let out = subst_this(&pre, &recv);
        // Independent textual oracle: pretty-print the input, replace the
        // token `this` by `F[i]`, and compare with the pretty-printed output.
        let printed_in = crate::frontend::pretty::expr_to_string(&pre);
        let printed_out = crate::frontend::pretty::expr_to_string(&out);
        let expected = printed_in.replace("this", "F[i]");
        assert_eq!(printed_out, expected);
    }

    #[test]
    fn subst_var_simple() {
        // F[i].x > 0  with i := j - 1
        let e = Expr::bin(
            BinOp::Gt,
            field(
                Expr::synth(ExprKind::SeqIndex {
                    base: Box::new(Expr::var("F")),
                    index: Box::new(Expr::var("i")),
                }),
                "x",
            ),
            Expr::int(0),
        );
        let repl = Expr::bin(BinOp::Sub, Expr::var("j"), Expr::int(1));
        let out = subst_var(&e, "i", &repl);
        assert_eq!(crate::frontend::pretty::expr_to_string(&out), "F[j - 1].x > 0");
    }

    #[test]
    fn subst_var_respects_shadowing() {
        // (\forall i := 0 .. n; F[i].x > 0) — substituting i leaves the body alone.
        let q = Expr::synth(ExprKind::Forall {
            binder: "i".into(),
            lo: Box::new(Expr::int(0)),
            hi: Box::new(Expr::var("n")),
            body: Box::new(Expr::bin(BinOp::Gt, Expr::var("i"), Expr::int(0))),
        });
        let out = subst_var(&q, "i", &Expr::int(7));
        assert_eq!(out, q);
    }

    #[test]
    fn subst_var_renames_on_capture() {
        // (\forall j := 0 .. n; j < i)  with i := j + 1: binder j must be renamed.
        let q = Expr::synth(ExprKind::Forall {
            binder: "j".into(),
            lo: Box::new(Expr::int(0)),
            hi: Box::new(Expr::var("n")),
            body: Box::new(Expr::bin(BinOp::Lt, Expr::var("j"), Expr::var("i"))),
        });
        let repl = Expr::bin(BinOp::Add, Expr::var("j"), Expr::int(1));
        let out = subst_var(&q, "i", &repl);
        match &out.kind {
            ExprKind::Forall { binder, body, .. } => {
                assert_ne!(binder, "j");
                let printed = crate::frontend::pretty::expr_to_string(body);
                assert_eq!(printed, format!("{binder} < j + 1"));
            }
            _ => panic!("expected forall"),
        }
    }

    #[test]
    fn placeholders_instantiate() {
        // \msg >= 0 && \sender == a  with msg := v, sender := a, receiver := b
        let inv = Expr::and(
            Expr::bin(BinOp::Ge, Expr::synth(ExprKind::Msg), Expr::int(0)),
            Expr::bin(BinOp::Eq, Expr::synth(ExprKind::Sender), Expr::var("a")),
        );
        let out = subst_placeholders(&inv, &Expr::var("v"), &Expr::var("a"), &Expr::var("b"));
        assert_eq!(crate::frontend::pretty::expr_to_string(&out), "v >= 0 && a == a");
    }

    #[test]
    fn fresh_names_avoid_used() {
        let mut used = BTreeSet::new();
        assert_eq!(fresh_name("j", &used), "j");
        used.insert("j".to_string());
        used.insert("j1".to_string());
        assert_eq!(fresh_name("j", &used), "j2");
    }
}
