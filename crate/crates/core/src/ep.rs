//! Per-endpoint programs, the channel table shared by all of them, and the
//! index-map inverter used by ranged receives.
//!
//! Endpoint projection turns one choreography into one [`EndpointProgram`]
//! per declared sort. A singular endpoint gets a straight-line program; a
//! family gets a single program parameterized over the member's own index,
//! which every member runs. Communications appear as [`EStmt::Send`] /
//! [`EStmt::Recv`] over channels identified by a site number; the
//! [`ChannelTable`] lists, per site, which sorts talk — it is identical for
//! every sort, which is what makes the programs composable.

use crate::ast::{Expr, ExprKind, PurityLevel, SortTag};
use crate::frontend::pretty::expr_to_string;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// A reference to one channel: the communication site plus the evaluated
/// sender/receiver member indices (`None` for singular sorts). A message
/// travels on the queue keyed by `(site, sender index, receiver index)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChanRef {
    pub site: usize,
    pub sender_index: Option<Expr>,
    pub receiver_index: Option<Expr>,
}

impl fmt::Display for ChanRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ix = |e: &Option<Expr>| e.as_ref().map(expr_to_string).unwrap_or_else(|| "_".into());
        write!(f, "chan[{}]({} -> {})", self.site, ix(&self.sender_index), ix(&self.receiver_index))
    }
}

/// One row of the channel table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub site: usize,
    pub sender: SortTag,
    pub receiver: SortTag,
}

/// All communication sites of a choreography, in site order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelTable {
    pub entries: Vec<ChannelEntry>,
}

impl ChannelTable {
    pub fn entry(&self, site: usize) -> Option<&ChannelEntry> {
        self.entries.iter().find(|e| e.site == site)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("chan[{}]: {} -> {}\n", e.site, e.sender, e.receiver));
        }
        out
    }
}

/// A statement of an endpoint program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EStmt {
    Assign { dest: Expr, value: Expr },
    Call { recv: Expr, method: String, args: Vec<Expr> },
    If { cond: Expr, then_branch: Vec<EStmt>, else_branch: Vec<EStmt> },
    /// `invariants` are the locally-projected loop invariants; they document
    /// what the instrumented sequential program checks and are not executed.
    While { invariants: Vec<Expr>, cond: Expr, body: Vec<EStmt> },
    Send { chan: ChanRef, value: Expr },
    /// Receive into `dest`; blocks until the queue has a message.
    Recv { chan: ChanRef, dest: Expr },
    /// A grouping with no behavior of its own. `Block { body: [] }` is the
    /// projection of a statement this endpoint takes no part in.
    Block { body: Vec<EStmt> },
}

impl EStmt {
    pub fn skip() -> EStmt {
        EStmt::Block { body: Vec::new() }
    }

    /// True for statements with no observable behavior at all.
    pub fn is_skip(&self) -> bool {
        match self {
            EStmt::Block { body } => body.iter().all(EStmt::is_skip),
            _ => false,
        }
    }
}

/// The program run by every instance of one endpoint sort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointProgram {
    pub sort: SortTag,
    /// Binder naming this member's own index; `None` for singular sorts.
    pub self_index: Option<String>,
    /// Family size expression; `None` for singular sorts.
    pub size: Option<Expr>,
    pub body: Vec<EStmt>,
}

impl EndpointProgram {
    /// Render as indented text (display-only).
    pub fn to_text(&self) -> String {
        let mut w = Writer { out: String::new(), depth: 0 };
        match (&self.self_index, &self.size) {
            (Some(j), Some(size)) => w.line(&format!(
                "endpoint {}[{j} := 0 .. {}] {{",
                self.sort,
                expr_to_string(size)
            )),
            _ => w.line(&format!("endpoint {} {{", self.sort)),
        }
        w.depth += 1;
        for s in &self.body {
            w.stmt(s);
        }
        w.depth -= 1;
        w.line("}");
        w.out
    }

    /// Walk every statement, depth-first.
    pub fn walk(&self, f: &mut impl FnMut(&EStmt)) {
        fn go(stmts: &[EStmt], f: &mut impl FnMut(&EStmt)) {
            for s in stmts {
                f(s);
                match s {
                    EStmt::If { then_branch, else_branch, .. } => {
                        go(then_branch, f);
                        go(else_branch, f);
                    }
                    EStmt::While { body, .. } | EStmt::Block { body } => go(body, f),
                    _ => {}
                }
            }
        }
        go(&self.body, f);
    }
}

struct Writer {
    out: String,
    depth: usize,
}

impl Writer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn body(&mut self, stmts: &[EStmt]) {
        self.depth += 1;
        for s in stmts {
            self.stmt(s);
        }
        self.depth -= 1;
    }

    fn stmt(&mut self, s: &EStmt) {
        match s {
            EStmt::Assign { dest, value } => {
                self.line(&format!("{} := {};", expr_to_string(dest), expr_to_string(value)));
            }
            EStmt::Call { recv, method, args } => {
                let args = args.iter().map(expr_to_string).collect::<Vec<_>>().join(", ");
                self.line(&format!("{}.{method}({args});", expr_to_string(recv)));
            }
            EStmt::If { cond, then_branch, else_branch } => {
                self.line(&format!("if ({}) {{", expr_to_string(cond)));
                self.body(then_branch);
                if else_branch.is_empty() {
                    self.line("}");
                } else {
                    self.line("} else {");
                    self.body(else_branch);
                    self.line("}");
                }
            }
            EStmt::While { invariants, cond, body } => {
                for inv in invariants {
                    self.line(&format!("loop_invariant {};", expr_to_string(inv)));
                }
                self.line(&format!("while ({}) {{", expr_to_string(cond)));
                self.body(body);
                self.line("}");
            }
            EStmt::Send { chan, value } => {
                self.line(&format!("send {} over {chan};", expr_to_string(value)));
            }
            EStmt::Recv { chan, dest } => {
                self.line(&format!("recv {} from {chan};", expr_to_string(dest)));
            }
            EStmt::Block { body } => {
                if body.is_empty() {
                    self.line("{ }");
                } else {
                    self.line("{");
                    self.body(body);
                    self.line("}");
                }
            }
        }
    }
}

/// Failure of [`invert_index_expr`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvertError {
    #[error("receiver index map `{0}` is outside the invertible fragment (v, v + c, v - c, c + v)")]
    NotInvertible(String),
}

/// Invert a receiver index map.
///
/// For a ranged communication the receiver of the message sent by member
/// `v` is member `d(v)`; the receiving side must recover, from its own index
/// `j`, which sender targeted it — that is `d⁻¹(j)`. Only shift maps have a
/// recognized inverse:
///
/// * `v`       ⇒ `j`
/// * `v + c`   ⇒ `j - c`
/// * `v - c`   ⇒ `j + c`
/// * `c + v`   ⇒ `j - c`
///
/// where `c` is pure and does not mention `v`. Anything else — including
/// maps like `c - v` and `2 * v` — is rejected; for non-injective maps this
/// is what keeps the receive side from silently merging messages.
pub fn invert_index_expr(binder: &str, map: &Expr, own_index: &Expr) -> Result<Expr, InvertError> {
    use crate::ast::BinOp;
    let is_shift = |e: &Expr| e.level() == PurityLevel::Pure && !e.free_vars().contains(binder);
    let is_binder =
        |e: &Expr| matches!(&e.kind, ExprKind::Var { name } if name == binder);
    match &map.kind {
        _ if is_binder(map) => Ok(own_index.clone()),
        ExprKind::BinOp { op: BinOp::Add, lhs, rhs } if is_binder(lhs) && is_shift(rhs) => {
            Ok(Expr::bin(BinOp::Sub, own_index.clone(), (**rhs).clone()))
        }
        ExprKind::BinOp { op: BinOp::Add, lhs, rhs } if is_shift(lhs) && is_binder(rhs) => {
            Ok(Expr::bin(BinOp::Sub, own_index.clone(), (**lhs).clone()))
        }
        ExprKind::BinOp { op: BinOp::Sub, lhs, rhs } if is_binder(lhs) && is_shift(rhs) => {
            Ok(Expr::bin(BinOp::Add, own_index.clone(), (**rhs).clone()))
        }
        _ => Err(InvertError::NotInvertible(expr_to_string(map))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::BinOp;

    fn eval_int(e: &Expr, var: &str, val: i64) -> i64 {
        // Tiny evaluator for closed shift expressions over one variable.
        match &e.kind {
            ExprKind::Var { name } if name == var => val,
            ExprKind::IntLit { value } => {
                i64::try_from(value.clone()).expect("fits in i64")
            }
            ExprKind::BinOp { op, lhs, rhs } => {
                let l = eval_int(lhs, var, val);
                let r = eval_int(rhs, var, val);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    _ => panic!("not an int op"),
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Frozen behavior: for every shift map `d` in the supported fragment and
    /// every index in a wide window, `d⁻¹(d(i)) == i`.
    #[test]
    fn shift_inverses_round_trip() {
        let v = |n: &str| Expr::var(n);
        for c in -5i64..=5 {
            let maps = vec![
                v("i"),
                Expr::bin(BinOp::Add, v("i"), Expr::int(c)),
                Expr::bin(BinOp::Sub, v("i"), Expr::int(c)),
                Expr::bin(BinOp::Add, Expr::int(c), v("i")),
            ];
            for d in maps {
                let inv = invert_index_expr("i", &d, &v("j")).unwrap();
                for i in -100i64..=100 {
                    let forward = eval_int(&d, "i", i);
                    let back = eval_int(&inv, "j", forward);
                    assert_eq!(back, i, "map {} at {i}", expr_to_string(&d));
                }
            }
        }
    }

    #[test]
    fn non_shift_maps_are_rejected() {
        let v = |n: &str| Expr::var(n);
        let reflected = Expr::bin(BinOp::Sub, Expr::int(7), v("i"));
        let scaled = Expr::bin(BinOp::Mul, Expr::int(2), v("i"));
        let scaled_r = Expr::bin(BinOp::Mul, v("i"), Expr::int(2));
        let constant = Expr::int(0);
        for bad in [reflected, scaled, scaled_r, constant] {
            assert!(
                invert_index_expr("i", &bad, &v("j")).is_err(),
                "{} should not invert",
                expr_to_string(&bad)
            );
        }
    }

    #[test]
    fn shift_by_variable_amount_inverts() {
        // `i + k` for a parameter k is a shift: c need not be a literal.
        let d = Expr::bin(BinOp::Add, Expr::var("i"), Expr::var("k"));
        let inv = invert_index_expr("i", &d, &Expr::var("j")).unwrap();
        assert_eq!(expr_to_string(&inv), "j - k");
    }

    #[test]
    fn shift_mentioning_the_binder_is_rejected() {
        // `i + i` is not a shift.
        let d = Expr::bin(BinOp::Add, Expr::var("i"), Expr::var("i"));
        assert!(invert_index_expr("i", &d, &Expr::var("j")).is_err());
    }

    #[test]
    fn empty_blocks_are_skips() {
        assert!(EStmt::skip().is_skip());
        assert!(EStmt::Block { body: vec![EStmt::skip(), EStmt::skip()] }.is_skip());
        assert!(!EStmt::Assign { dest: Expr::var("x"), value: Expr::int(1) }.is_skip());
    }

    #[test]
    fn channel_table_text_is_ordered() {
        let table = ChannelTable {
            entries: vec![
                ChannelEntry { site: 0, sender: SortTag("a".into()), receiver: SortTag("b".into()) },
                ChannelEntry { site: 1, sender: SortTag("F".into()), receiver: SortTag("G".into()) },
            ],
        };
        assert_eq!(table.to_text(), "chan[0]: a -> b\nchan[1]: F -> G\n");
        assert_eq!(table.entry(1).unwrap().sender, SortTag("F".into()));
    }
}
