//! Source printer.
//!
//! Prints with minimal parentheses: a subexpression is parenthesized only
//! when its operator binds looser than its context requires. `parse ∘ pretty`
//! is the identity on ASTs, and `pretty ∘ parse ∘ pretty` is byte-identical
//! to `pretty`.

use crate::ast::*;
use std::fmt::Write as _;

/// Binding strengths, loosest first. A child is parenthesized when its own
/// strength is below what its position demands.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Implies,
    Sep,
    Or,
    And,
    Cmp,
    Add,
    Mul,
    Postfix,
    Atom,
}

impl Prec {
    fn next(self) -> Prec {
        match self {
            Prec::Implies => Prec::Sep,
            Prec::Sep => Prec::Or,
            Prec::Or => Prec::And,
            Prec::And => Prec::Cmp,
            Prec::Cmp => Prec::Add,
            Prec::Add => Prec::Mul,
            Prec::Mul => Prec::Postfix,
            Prec::Postfix => Prec::Atom,
            Prec::Atom => Prec::Atom,
        }
    }
}

fn prec_of(e: &Expr) -> Prec {
    match &e.kind {
        ExprKind::BinOp { op, .. } => match op {
            BinOp::Implies => Prec::Implies,
            BinOp::Or => Prec::Or,
            BinOp::And => Prec::And,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => Prec::Cmp,
            BinOp::Add | BinOp::Sub => Prec::Add,
            BinOp::Mul => Prec::Mul,
        },
        ExprKind::SepConj { .. } => Prec::Sep,
        ExprKind::FieldAccess { .. } | ExprKind::SeqIndex { .. } => Prec::Postfix,
        ExprKind::FnCall { recv: Some(_), .. } => Prec::Postfix,
        _ => Prec::Atom,
    }
}

/// Render one expression as source text.
pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, Prec::Implies);
    s
}

fn write_expr(out: &mut String, e: &Expr, min: Prec) {
    let own = prec_of(e);
    let parens = own < min;
    if parens {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Var { name } => out.push_str(name),
        ExprKind::IntLit { value } => {
            let _ = write!(out, "{value}");
        }
        ExprKind::BoolLit { value } => {
            let _ = write!(out, "{value}");
        }
        ExprKind::FracLit { num, den } => {
            let _ = write!(out, "{num}\\{den}");
        }
        ExprKind::This => out.push_str("this"),
        ExprKind::Msg => out.push_str("\\msg"),
        ExprKind::Sender => out.push_str("\\sender"),
        ExprKind::Receiver => out.push_str("\\receiver"),
        ExprKind::FieldAccess { base, field } => {
            write_expr(out, base, Prec::Postfix);
            out.push('.');
            out.push_str(field);
        }
        ExprKind::SeqIndex { base, index } => {
            write_expr(out, base, Prec::Postfix);
            out.push('[');
            write_expr(out, index, Prec::Implies);
            out.push(']');
        }
        ExprKind::BinOp { op, lhs, rhs } => {
            let (lmin, rmin) = match op {
                // Right-associative: bare nesting allowed on the right.
                BinOp::Implies => (own.next(), own),
                // Non-associative comparisons: parenthesize nested ones.
                BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    (own.next(), own.next())
                }
                // Left-associative.
                _ => (own, own.next()),
            };
            write_expr(out, lhs, lmin);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, rmin);
        }
        ExprKind::SepConj { lhs, rhs } => {
            write_expr(out, lhs, Prec::Sep.next());
            out.push_str(" ** ");
            write_expr(out, rhs, Prec::Sep);
        }
        ExprKind::FnCall { recv, name, args, .. } => {
            if let Some(r) = recv {
                write_expr(out, r, Prec::Postfix);
                out.push('.');
            }
            out.push_str(name);
            write_args(out, args);
        }
        ExprKind::Perm { place, amount } => {
            out.push_str("Perm(");
            write_expr(out, place, Prec::Implies);
            out.push_str(", ");
            write_expr(out, amount, Prec::Implies);
            out.push(')');
        }
        ExprKind::PredApply { name, args } => {
            out.push_str(name);
            write_args(out, args);
        }
        ExprKind::EndpointExpr { target, body } => {
            out.push_str("(\\endpoint ");
            out.push_str(&target_to_string(target));
            out.push_str("; ");
            write_expr(out, body, Prec::Implies);
            out.push(')');
        }
        ExprKind::ChorExpr { body } => {
            out.push_str("(\\chor ");
            write_expr(out, body, Prec::Implies);
            out.push(')');
        }
        ExprKind::Forall { binder, lo, hi, body } => {
            out.push_str("(\\forall ");
            out.push_str(binder);
            out.push_str(" := ");
            write_expr(out, lo, Prec::Implies);
            out.push_str(" .. ");
            write_expr(out, hi, Prec::Implies);
            out.push_str("; ");
            write_expr(out, body, Prec::Implies);
            out.push(')');
        }
        ExprKind::QuantPerm { binder, ty, lo, hi, body } => {
            out.push_str("(\\forall* ");
            out.push_str(&type_to_string(ty));
            out.push(' ');
            out.push_str(binder);
            out.push_str(" := ");
            write_expr(out, lo, Prec::Implies);
            out.push_str(" .. ");
            write_expr(out, hi, Prec::Implies);
            out.push_str("; ");
            write_expr(out, body, Prec::Implies);
            out.push(')');
        }
        ExprKind::Confined { target, body } => {
            // Display form only: this node has no source syntax and is never
            // fed back to the parser.
            out.push_str("Confined(");
            out.push_str(&target.sort);
            if let Some(ix) = &target.index {
                out.push('[');
                write_expr(out, ix, Prec::Implies);
                out.push(']');
            }
            out.push_str(", ");
            write_expr(out, body, Prec::Implies);
            out.push(')');
        }
    }
    if parens {
        out.push(')');
    }
}

fn write_args(out: &mut String, args: &[Expr]) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a, Prec::Implies);
    }
    out.push(')');
}

/// Render an endpoint target: `a`, `F[e]`, or `F[v := lo .. hi]`.
pub fn target_to_string(t: &EndpointTarget) -> String {
    match t {
        EndpointTarget::Singular { name } => name.clone(),
        EndpointTarget::FamilyIndex { family, index } => {
            format!("{family}[{}]", expr_to_string(index))
        }
        EndpointTarget::FamilyRange { family, binder, lo, hi } => format!(
            "{family}[{binder} := {} .. {}]",
            expr_to_string(lo),
            expr_to_string(hi)
        ),
    }
}

pub fn type_to_string(ty: &Type) -> String {
    match ty {
        Type::Int => "int".to_string(),
        Type::Bool => "boolean".to_string(),
        Type::Seq { elem } => format!("seq<{}>", type_to_string(elem)),
        Type::Class { name } => name.clone(),
    }
}

/// Render a whole program as source text.
pub fn pretty(program: &Program) -> String {
    let mut p = Printer { out: String::new(), depth: 0 };
    for pragma in &program.pragmas {
        p.line(&format!("//! {pragma}"));
    }
    for (i, d) in program.decls.iter().enumerate() {
        if i > 0 || !program.pragmas.is_empty() {
            p.blank();
        }
        match d {
            Decl::Class(c) => p.class_decl(c),
            Decl::Predicate(pr) => p.predicate_decl(pr),
            Decl::Function(f) => p.function_decl(f),
            Decl::Choreography(c) => p.choreography(c),
        }
    }
    p.out
}

struct Printer {
    out: String,
    depth: usize,
}

impl Printer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn blank(&mut self) {
        self.out.push('\n');
    }

    fn contract(&mut self, c: &Contract) {
        for r in &c.requires {
            self.line(&format!("requires {};", expr_to_string(r)));
        }
        for e in &c.ensures {
            self.line(&format!("ensures {};", expr_to_string(e)));
        }
    }

    fn params(&self, params: &[Param]) -> String {
        params
            .iter()
            .map(|p| format!("{} {}", type_to_string(&p.ty), p.name))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn exprs(&self, args: &[Expr]) -> String {
        args.iter().map(expr_to_string).collect::<Vec<_>>().join(", ")
    }

    fn class_decl(&mut self, c: &ClassDecl) {
        self.line(&format!("class {} {{", c.name));
        self.depth += 1;
        for f in &c.fields {
            self.line(&format!("{} {};", type_to_string(&f.ty), f.name));
        }
        let mut first_member = c.fields.is_empty();
        if let Some(ctor) = &c.ctor {
            if !first_member {
                self.blank();
            }
            first_member = false;
            self.contract(&ctor.contract);
            self.line(&format!("constructor({}) {{", self.params(&ctor.params)));
            self.method_body(&ctor.body);
            self.line("}");
        }
        for m in &c.methods {
            if !first_member {
                self.blank();
            }
            first_member = false;
            self.contract(&m.contract);
            self.line(&format!(
                "{} {}({}) {{",
                type_to_string(&m.ret),
                m.name,
                self.params(&m.params)
            ));
            self.method_body(&m.body);
            self.line("}");
        }
        self.depth -= 1;
        self.line("}");
    }

    fn predicate_decl(&mut self, p: &PredicateDecl) {
        self.line(&format!(
            "resource {}({}) = {};",
            p.name,
            self.params(&p.params),
            expr_to_string(&p.body)
        ));
    }

    fn function_decl(&mut self, f: &FunctionDecl) {
        self.contract(&f.contract);
        self.line(&format!(
            "pure {} {}({}) = {};",
            type_to_string(&f.ret),
            f.name,
            self.params(&f.params),
            expr_to_string(&f.body)
        ));
    }

    fn choreography(&mut self, c: &Choreography) {
        self.contract(&c.contract);
        self.line(&format!("choreography {}({}) {{", c.name, self.params(&c.params)));
        self.depth += 1;
        for ep in &c.endpoints {
            match ep {
                EndpointDecl::Singular { name, class, args, .. } => {
                    self.line(&format!("endpoint {name} = {class}({});", self.exprs(args)));
                }
                EndpointDecl::Family { name, binder, size, class, args, .. } => {
                    self.line(&format!(
                        "endpoint {name}[{binder} := 0 .. {}] = {class}({});",
                        expr_to_string(size),
                        self.exprs(args)
                    ));
                }
            }
        }
        self.blank();
        self.contract(&c.run.contract);
        self.line("run {");
        self.depth += 1;
        for s in &c.run.body {
            self.chor_stmt(s);
        }
        self.depth -= 1;
        self.line("}");
        self.depth -= 1;
        self.line("}");
    }

    fn chor_stmt(&mut self, s: &ChorStmt) {
        match &s.kind {
            ChorStmtKind::If { cond, then_branch, else_branch } => {
                self.line(&format!("if ({}) {{", expr_to_string(cond)));
                self.depth += 1;
                for t in then_branch {
                    self.chor_stmt(t);
                }
                self.depth -= 1;
                if else_branch.is_empty() {
                    self.line("}");
                } else {
                    self.line("} else {");
                    self.depth += 1;
                    for t in else_branch {
                        self.chor_stmt(t);
                    }
                    self.depth -= 1;
                    self.line("}");
                }
            }
            ChorStmtKind::While { invariants, cond, body } => {
                for inv in invariants {
                    self.line(&format!("loop_invariant {};", expr_to_string(inv)));
                }
                self.line(&format!("while ({}) {{", expr_to_string(cond)));
                self.depth += 1;
                for t in body {
                    self.chor_stmt(t);
                }
                self.depth -= 1;
                self.line("}");
            }
            ChorStmtKind::Assert { expr } => {
                self.line(&format!("assert {};", expr_to_string(expr)));
            }
            ChorStmtKind::Endpoint { target, action } => {
                let action_text = match action {
                    EpAction::Assign { dest, value } => {
                        format!("{} := {};", expr_to_string(dest), expr_to_string(value))
                    }
                    EpAction::Call { recv, method, args } => {
                        format!("{}.{method}({});", expr_to_string(recv), self.exprs(args))
                    }
                };
                self.line(&format!("endpoint {}: {action_text}", target_to_string(target)));
            }
            ChorStmtKind::Communicate { invariant, sender, msg, receiver, dest } => {
                if let Some(inv) = invariant {
                    self.line(&format!("channel_invariant {};", expr_to_string(inv)));
                }
                self.line(&format!(
                    "communicate {}: {} -> {}: {};",
                    target_to_string(sender),
                    expr_to_string(msg),
                    target_to_string(receiver),
                    expr_to_string(dest)
                ));
            }
        }
    }

    fn method_body(&mut self, body: &[MethodStmt]) {
        self.depth += 1;
        for s in body {
            self.method_stmt(s);
        }
        self.depth -= 1;
    }

    fn method_stmt(&mut self, s: &MethodStmt) {
        match &s.kind {
            MethodStmtKind::Assert { expr } => {
                self.line(&format!("assert {};", expr_to_string(expr)));
            }
            MethodStmtKind::Inhale { expr } => {
                self.line(&format!("inhale {};", expr_to_string(expr)));
            }
            MethodStmtKind::Exhale { expr } => {
                self.line(&format!("exhale {};", expr_to_string(expr)));
            }
            MethodStmtKind::Assign { dest, value } => {
                self.line(&format!("{} := {};", expr_to_string(dest), expr_to_string(value)));
            }
            MethodStmtKind::Call { recv, method, args } => {
                self.line(&format!("{}.{method}({});", expr_to_string(recv), self.exprs(args)));
            }
            MethodStmtKind::If { cond, then_branch, else_branch } => {
                self.line(&format!("if ({}) {{", expr_to_string(cond)));
                self.method_body(then_branch);
                if else_branch.is_empty() {
                    self.line("}");
                } else {
                    self.line("} else {");
                    self.method_body(else_branch);
                    self.line("}");
                }
            }
            MethodStmtKind::While { invariants, cond, body } => {
                for inv in invariants {
                    self.line(&format!("loop_invariant {};", expr_to_string(inv)));
                }
                self.line(&format!("while ({}) {{", expr_to_string(cond)));
                self.method_body(body);
                self.line("}");
            }
            MethodStmtKind::Par { contract, ty, binder, lo, hi, body } => {
                self.contract(contract);
                self.line(&format!(
                    "par ({} {binder} = {} .. {}) {{",
                    type_to_string(ty),
                    expr_to_string(lo),
                    expr_to_string(hi)
                ));
                self.method_body(body);
                self.line("}");
            }
        }
    }
}
