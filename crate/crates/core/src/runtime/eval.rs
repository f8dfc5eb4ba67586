//! The expression evaluator shared by all three interpreters.
//!
//! The interpreters differ only in policy: what a heap access implies
//! (nothing / an ownership check / a footprint entry), what `Perm` means
//! (`true` / a ledger query), and whether `\endpoint`, `\chor`, and confined
//! expressions have a meaning. Each interpreter supplies those decisions
//! through [`EvalHooks`]; everything else — arithmetic, short-circuiting,
//! quantifier ranges, function and predicate inlining — lives here once.
//!
//! `&&`, `||`, and `==>` evaluate left to right and short-circuit.

use super::heap::{default_value, Heap, InstanceKey};
use super::report::{CheckClass, CheckRecord};
use super::value::{fatal, Fatal, ObjId, Value};
use crate::ast::*;
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use std::collections::BTreeMap;

/// Lexically scoped variable bindings.
#[derive(Debug, Clone, Default)]
pub struct Scopes {
    frames: Vec<BTreeMap<String, Value>>,
}

impl Scopes {
    pub fn new() -> Scopes {
        Scopes { frames: vec![BTreeMap::new()] }
    }

    pub fn from_bindings(bindings: BTreeMap<String, Value>) -> Scopes {
        Scopes { frames: vec![bindings] }
    }

    pub fn push(&mut self) {
        self.frames.push(BTreeMap::new());
    }

    pub fn pop(&mut self) {
        self.frames.pop().expect("scope underflow");
    }

    pub fn bind(&mut self, name: impl Into<String>, value: Value) {
        self.frames.last_mut().expect("no scope").insert(name.into(), value);
    }

    pub fn lookup(&self, name: &str) -> Result<&Value, Fatal> {
        self.frames
            .iter()
            .rev()
            .find_map(|f| f.get(name))
            .ok_or_else(|| fatal(format!("unbound variable `{name}`")))
    }
}

/// Interpreter-specific policy; see the module docs. Default implementations
/// are the permissive ("plain execution") choices.
pub trait EvalHooks: Sized {
    fn program(&self) -> &Program;
    fn heap(&self) -> &Heap;
    fn heap_mut(&mut self) -> &mut Heap;

    /// Record a check outcome (assert results, ownership violations, …).
    fn check(
        &mut self,
        class: CheckClass,
        label: &str,
        passed: bool,
        detail: String,
        site: Option<usize>,
    );

    /// Called on every data read of `obj.field` (not on permission
    /// bookkeeping). Default: unrestricted.
    fn note_read(&mut self, _obj: ObjId, _field: &str) {}

    /// Called on every data write of `obj.field`. Default: unrestricted.
    fn note_write(&mut self, _obj: ObjId, _field: &str) {}

    /// Truth of `Perm(obj.field, amount)`. Default: permissions are not
    /// tracked and the query holds.
    fn perm_holds(&mut self, _obj: ObjId, _field: &str, _amount: &super::value::Frac) -> bool {
        true
    }

    /// Evaluate `(\endpoint α; body)`. Only the global-view interpreter
    /// gives this a meaning.
    fn endpoint_expr(
        &mut self,
        _env: &mut Scopes,
        target: &EndpointTarget,
        _body: &Expr,
    ) -> Result<Value, Fatal> {
        Err(fatal(format!(
            "(\\endpoint {}; ...) has no meaning in this execution mode",
            target.sort()
        )))
    }

    /// Evaluate `(\chor body)`. Default: the body, over the full state.
    fn chor_expr(&mut self, env: &mut Scopes, body: &Expr) -> Result<Value, Fatal> {
        eval(self, env, body)
    }

    /// Evaluate a confined expression. Only the checking interpreter gives
    /// this a meaning.
    fn confined_expr(
        &mut self,
        _env: &mut Scopes,
        target: &ConfineTarget,
        _body: &Expr,
    ) -> Result<Value, Fatal> {
        Err(fatal(format!(
            "Confined({}, ...) has no meaning in this execution mode",
            target.sort
        )))
    }
}

/// Evaluate `e` under the hook policy `h`.
pub fn eval<H: EvalHooks>(h: &mut H, env: &mut Scopes, e: &Expr) -> Result<Value, Fatal> {
    match &e.kind {
        ExprKind::Var { name } => env.lookup(name).cloned(),
        ExprKind::IntLit { value } => Ok(Value::Int(value.clone())),
        ExprKind::BoolLit { value } => Ok(Value::Bool(*value)),
        ExprKind::FracLit { num, den } => {
            Ok(Value::Frac(super::value::Frac::new(num.clone(), den.clone())?))
        }
        ExprKind::This => env.lookup("this").cloned(),
        ExprKind::FieldAccess { base, field } => {
            let id = eval(h, env, base)?.as_ref_id()?;
            h.note_read(id, field);
            h.heap().read(id, field)
        }
        ExprKind::SeqIndex { base, index } => {
            let seq = eval(h, env, base)?;
            let items = seq.as_seq()?.to_vec();
            let ix = eval(h, env, index)?;
            let ix = ix.as_int()?;
            let len = BigInt::from(items.len());
            if ix.is_negative() || *ix >= len {
                return Err(fatal(format!(
                    "index {ix} out of range for a sequence of length {len}"
                )));
            }
            let ix = ix.to_usize().expect("bounded index fits usize");
            Ok(items[ix].clone())
        }
        ExprKind::BinOp { op, lhs, rhs } => eval_binop(h, env, *op, lhs, rhs),
        ExprKind::SepConj { lhs, rhs } => {
            // In a truth-value position `**` conjoins like `&&`; the summing
            // interpretation lives in the resource walker of the checker.
            if !eval(h, env, lhs)?.as_bool()? {
                return Ok(Value::Bool(false));
            }
            eval(h, env, rhs)
        }
        ExprKind::FnCall { recv: Some(_), name, .. } => Err(fatal(format!(
            "method `{name}` used as an expression"
        ))),
        ExprKind::FnCall { recv: None, name, args, .. } => {
            let decl = h
                .program()
                .function(name)
                .ok_or_else(|| fatal(format!("unknown function `{name}`")))?
                .clone();
            let mut frame = BTreeMap::new();
            for (p, a) in decl.params.iter().zip(args) {
                frame.insert(p.name.clone(), eval(h, env, a)?);
            }
            if decl.params.len() != args.len() {
                return Err(fatal(format!("function `{name}` arity mismatch")));
            }
            let mut inner = Scopes::from_bindings(frame);
            eval(h, &mut inner, &decl.body)
        }
        ExprKind::Perm { place, amount } => {
            let (id, field) = resolve_place(h, env, place)?;
            let amt = eval(h, env, amount)?.as_frac()?;
            if !amt.is_permission_amount() {
                return Err(fatal(format!("invalid permission amount {amt}")));
            }
            Ok(Value::Bool(h.perm_holds(id, &field, &amt)))
        }
        ExprKind::PredApply { name, args } => {
            let decl = h
                .program()
                .predicate(name)
                .ok_or_else(|| fatal(format!("unknown resource predicate `{name}`")))?
                .clone();
            if decl.params.len() != args.len() {
                return Err(fatal(format!("resource `{name}` arity mismatch")));
            }
            let mut frame = BTreeMap::new();
            for (p, a) in decl.params.iter().zip(args) {
                frame.insert(p.name.clone(), eval(h, env, a)?);
            }
            let mut inner = Scopes::from_bindings(frame);
            eval(h, &mut inner, &decl.body)
        }
        ExprKind::EndpointExpr { target, body } => h.endpoint_expr(env, target, body),
        ExprKind::ChorExpr { body } => h.chor_expr(env, body),
        ExprKind::Msg | ExprKind::Sender | ExprKind::Receiver => {
            Err(fatal("channel-invariant placeholder outside a channel invariant"))
        }
        ExprKind::Forall { binder, lo, hi, body }
        | ExprKind::QuantPerm { binder, lo, hi, body, .. } => {
            let lo = eval(h, env, lo)?.as_int()?.clone();
            let hi = eval(h, env, hi)?.as_int()?.clone();
            let mut v = lo;
            while v < hi {
                env.push();
                env.bind(binder.clone(), Value::Int(v.clone()));
                let holds = eval(h, env, body).and_then(|r| r.as_bool());
                env.pop();
                if !holds? {
                    return Ok(Value::Bool(false));
                }
                v += 1;
            }
            Ok(Value::Bool(true))
        }
        ExprKind::Confined { target, body } => h.confined_expr(env, target, body),
    }
}

fn eval_binop<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    op: BinOp,
    lhs: &Expr,
    rhs: &Expr,
) -> Result<Value, Fatal> {
    match op {
        BinOp::And => {
            if !eval(h, env, lhs)?.as_bool()? {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(eval(h, env, rhs)?.as_bool()?))
        }
        BinOp::Or => {
            if eval(h, env, lhs)?.as_bool()? {
                return Ok(Value::Bool(true));
            }
            Ok(Value::Bool(eval(h, env, rhs)?.as_bool()?))
        }
        BinOp::Implies => {
            if !eval(h, env, lhs)?.as_bool()? {
                return Ok(Value::Bool(true));
            }
            Ok(Value::Bool(eval(h, env, rhs)?.as_bool()?))
        }
        BinOp::Eq | BinOp::Ne => {
            let l = eval(h, env, lhs)?;
            let r = eval(h, env, rhs)?;
            let eq = l.try_eq(&r)?;
            Ok(Value::Bool(if op == BinOp::Eq { eq } else { !eq }))
        }
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let l = eval(h, env, lhs)?;
            let r = eval(h, env, rhs)?;
            let ord = match (&l, &r) {
                (Value::Int(a), Value::Int(b)) => a.cmp(b),
                (Value::Frac(a), Value::Frac(b)) => a.cmp(b),
                _ => {
                    return Err(fatal(format!(
                        "cannot order a {} against a {}",
                        l.kind_name(),
                        r.kind_name()
                    )))
                }
            };
            let holds = match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                BinOp::Ge => ord.is_ge(),
                _ => unreachable!(),
            };
            Ok(Value::Bool(holds))
        }
        BinOp::Add | BinOp::Sub | BinOp::Mul => {
            let l = eval(h, env, lhs)?;
            let r = eval(h, env, rhs)?;
            match (&l, &r) {
                (Value::Int(a), Value::Int(b)) => Ok(Value::Int(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    _ => unreachable!(),
                })),
                (Value::Frac(a), Value::Frac(b)) => match op {
                    BinOp::Add => Ok(Value::Frac(a.clone() + b.clone())),
                    BinOp::Sub => Ok(Value::Frac(a.clone() - b.clone())),
                    _ => Err(fatal("fractions only add and subtract")),
                },
                _ => Err(fatal(format!(
                    "arithmetic needs two ints, got a {} and a {}",
                    l.kind_name(),
                    r.kind_name()
                ))),
            }
        }
    }
}

/// Resolve a `Perm` place or assignment destination `base.field` to its heap
/// location without counting it as a data access. Field types carry no
/// references, so evaluating `base` cannot itself read a field.
pub fn resolve_place<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    place: &Expr,
) -> Result<(ObjId, String), Fatal> {
    match &place.kind {
        ExprKind::FieldAccess { base, field } => {
            let id = eval(h, env, base)?.as_ref_id()?;
            Ok((id, field.clone()))
        }
        _ => Err(fatal("expected a field location `target.field`")),
    }
}

/// Execute `dest := value` where `dest` is a field location: evaluates the
/// value, resolves the destination, reports the write to the hooks, and
/// type-checks the stored value against the field declaration.
pub fn assign<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    dest: &Expr,
    value: &Expr,
) -> Result<(), Fatal> {
    let v = eval(h, env, value)?;
    store(h, env, dest, v)
}

/// Store an already-evaluated value into a field location (same checks as
/// [`assign`]).
pub fn store<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    dest: &Expr,
    v: Value,
) -> Result<(), Fatal> {
    let (id, field) = resolve_place(h, env, dest)?;
    h.note_write(id, &field);
    let class_name = h.heap().get(id)?.class.clone();
    let class = h
        .program()
        .class(&class_name)
        .ok_or_else(|| fatal(format!("unknown class `{class_name}`")))?;
    let decl = class
        .field(&field)
        .ok_or_else(|| fatal(format!("class `{class_name}` has no field `{field}`")))?;
    let ok = matches!(
        (&decl.ty, &v),
        (Type::Int, Value::Int(_)) | (Type::Bool, Value::Bool(_)) | (Type::Seq { .. }, Value::Seq(_))
    );
    if !ok {
        return Err(fatal(format!(
            "cannot store a {} in field `{field}` of type {}",
            v.kind_name(),
            decl.ty
        )));
    }
    h.heap_mut().write(id, &field, v)
}

/// Plain execution of method/constructor statements: asserts are evaluated
/// and recorded, user `inhale`/`exhale` are no-ops, `par` runs sequentially
/// in ascending order with its contract ignored. Used by the global-view
/// interpreter, the endpoint tasks, and constructor execution during setup;
/// the checking interpreter has its own ledger-aware walker.
pub fn exec_plain_method_body<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    stmts: &[MethodStmt],
) -> Result<(), Fatal> {
    for s in stmts {
        match &s.kind {
            MethodStmtKind::Assert { expr } => {
                let passed = eval(h, env, expr)?.as_bool()?;
                let detail = if passed {
                    String::new()
                } else {
                    format!("assert {} failed", crate::frontend::pretty::expr_to_string(expr))
                };
                h.check(CheckClass::Plain, "method-assert", passed, detail, None);
            }
            MethodStmtKind::Inhale { .. } | MethodStmtKind::Exhale { .. } => {}
            MethodStmtKind::Assign { dest, value } => assign(h, env, dest, value)?,
            MethodStmtKind::Call { recv, method, args } => {
                call_plain_method(h, env, recv, method, args)?;
            }
            MethodStmtKind::If { cond, then_branch, else_branch } => {
                if eval(h, env, cond)?.as_bool()? {
                    exec_plain_method_body(h, env, then_branch)?;
                } else {
                    exec_plain_method_body(h, env, else_branch)?;
                }
            }
            MethodStmtKind::While { cond, body, .. } => {
                while eval(h, env, cond)?.as_bool()? {
                    exec_plain_method_body(h, env, body)?;
                }
            }
            MethodStmtKind::Par { binder, lo, hi, body, .. } => {
                let lo = eval(h, env, lo)?.as_int()?.clone();
                let hi = eval(h, env, hi)?.as_int()?.clone();
                let mut v = lo;
                while v < hi {
                    env.push();
                    env.bind(binder.clone(), Value::Int(v.clone()));
                    let r = exec_plain_method_body(h, env, body);
                    env.pop();
                    r?;
                    v += 1;
                }
            }
        }
    }
    Ok(())
}

/// Call `recv.method(args)` with plain semantics (no contract checking).
pub fn call_plain_method<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    recv: &Expr,
    method: &str,
    args: &[Expr],
) -> Result<(), Fatal> {
    let this = eval(h, env, recv)?.as_ref_id()?;
    let (decl, _class) = lookup_method(h, this, method)?;
    let mut frame = BTreeMap::new();
    frame.insert("this".to_string(), Value::Ref(this));
    if decl.params.len() != args.len() {
        return Err(fatal(format!("method `{method}` arity mismatch")));
    }
    for (p, a) in decl.params.iter().zip(args) {
        frame.insert(p.name.clone(), eval(h, env, a)?);
    }
    let mut inner = Scopes::from_bindings(frame);
    exec_plain_method_body(h, &mut inner, &decl.body)
}

/// The method `name` on the dynamic class of object `this`.
pub fn lookup_method<H: EvalHooks>(
    h: &mut H,
    this: ObjId,
    name: &str,
) -> Result<(MethodDecl, String), Fatal> {
    let class_name = h.heap().get(this)?.class.clone();
    let class = h
        .program()
        .class(&class_name)
        .ok_or_else(|| fatal(format!("unknown class `{class_name}`")))?;
    let decl = class
        .method(name)
        .ok_or_else(|| fatal(format!("class `{class_name}` has no method `{name}`")))?;
    Ok((decl.clone(), class_name))
}

/// Allocate one endpoint instance: default-init the fields from the class
/// declaration, stamp the owner, then run the constructor body with plain
/// semantics (a class without a constructor keeps the defaults).
pub fn construct_instance<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    class_name: &str,
    owner: InstanceKey,
    args: &[Expr],
) -> Result<ObjId, Fatal> {
    let class = h
        .program()
        .class(class_name)
        .ok_or_else(|| fatal(format!("unknown class `{class_name}`")))?
        .clone();
    let mut fields = BTreeMap::new();
    for f in &class.fields {
        fields.insert(f.name.clone(), default_value(&f.ty)?);
    }
    let id = h.heap_mut().alloc(class_name.to_string(), owner, fields);
    if let Some(ctor) = &class.ctor {
        if ctor.params.len() != args.len() {
            return Err(fatal(format!("constructor of `{class_name}` arity mismatch")));
        }
        let mut frame = BTreeMap::new();
        frame.insert("this".to_string(), Value::Ref(id));
        for (p, a) in ctor.params.iter().zip(args) {
            frame.insert(p.name.clone(), eval(h, env, a)?);
        }
        let mut inner = Scopes::from_bindings(frame);
        exec_plain_method_body(h, &mut inner, &ctor.body)?;
    } else if !args.is_empty() {
        return Err(fatal(format!(
            "class `{class_name}` has no constructor but got {} arguments",
            args.len()
        )));
    }
    Ok(id)
}

/// Helper for hooks implementations: build a [`CheckRecord`].
pub fn record(
    seq: usize,
    class: CheckClass,
    label: &str,
    passed: bool,
    detail: String,
    site: Option<usize>,
) -> CheckRecord {
    CheckRecord { seq, class, label: label.to_string(), passed, detail, site }
}
