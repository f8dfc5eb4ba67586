//! Deterministic construction of the endpoint instances.
//!
//! Every execution mode starts from the same world: instances are allocated
//! in declaration order, family members in ascending index order, and each
//! constructor body runs with plain semantics. Object ids therefore line up
//! exactly across the global-view run, the checking run, and every endpoint
//! run — which is what makes final heaps directly comparable.
//!
//! Construction is a global phase: singular constructor arguments may read
//! endpoints declared earlier, so no ownership checks apply here. Tasks
//! become confined to their own memory only once execution starts.

use super::eval::{construct_instance, eval, EvalHooks, Scopes};
use super::heap::{Heap, InstanceKey};
use super::report::{CheckClass, CheckRecord};
use super::value::{fatal, Fatal, ObjId, Value};
use crate::ast::{Choreography, EndpointDecl, Expr, Param, Program, Type};
use crate::subst::subst_var;
use crate::vir::SetupStmt;
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use std::collections::BTreeMap;

/// The constructed initial state.
#[derive(Debug)]
pub struct World {
    pub heap: Heap,
    /// Parameter values, endpoint references (`a` → ref, `F` → seq of refs).
    pub globals: BTreeMap<String, Value>,
    /// Instances in construction order with their object.
    pub instances: Vec<(InstanceKey, ObjId)>,
    /// Results of asserts inside constructors (normally empty).
    pub checks: Vec<CheckRecord>,
}

/// The setup statements equivalent to a choreography's endpoint section.
pub fn setup_stmts(chor: &Choreography) -> Vec<SetupStmt> {
    chor.endpoints
        .iter()
        .map(|e| match e {
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
        .collect()
}

/// Check that `params` covers the declared parameters with the right kinds
/// and nothing else.
pub fn check_params(
    declared: &[Param],
    params: &BTreeMap<String, Value>,
) -> Result<(), Fatal> {
    for p in declared {
        let v = params
            .get(&p.name)
            .ok_or_else(|| fatal(format!("missing value for parameter `{}`", p.name)))?;
        let ok = matches!(
            (&p.ty, v),
            (Type::Int, Value::Int(_)) | (Type::Bool, Value::Bool(_))
        );
        if !ok {
            return Err(fatal(format!(
                "parameter `{}` expects {} but got a {}",
                p.name,
                p.ty,
                v.kind_name()
            )));
        }
    }
    for name in params.keys() {
        if !declared.iter().any(|p| &p.name == name) {
            return Err(fatal(format!("unknown parameter `{name}`")));
        }
    }
    Ok(())
}

struct SetupHooks<'a> {
    program: &'a Program,
    heap: Heap,
    checks: Vec<CheckRecord>,
}

impl EvalHooks for SetupHooks<'_> {
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
            label: format!("setup:{label}"),
            passed,
            detail,
            site,
        });
    }
}

/// Family size: evaluated, then required to be a non-negative machine-sized
/// count.
pub fn family_size<H: EvalHooks>(
    h: &mut H,
    env: &mut Scopes,
    family: &str,
    size: &Expr,
) -> Result<usize, Fatal> {
    let n = eval(h, env, size)?.as_int()?.clone();
    if n.is_negative() {
        return Err(fatal(format!("family `{family}` has negative size {n}")));
    }
    n.to_usize()
        .ok_or_else(|| fatal(format!("family `{family}` size {n} is too large")))
}

/// Build the initial world from the setup statements.
pub fn construct_world(
    program: &Program,
    setup: &[SetupStmt],
    params: &BTreeMap<String, Value>,
) -> Result<World, Fatal> {
    let mut h = SetupHooks { program, heap: Heap::new(), checks: Vec::new() };
    let mut globals = params.clone();
    let mut instances = Vec::new();

    for stmt in setup {
        let mut env = Scopes::from_bindings(globals.clone());
        match stmt {
            SetupStmt::Singular { name, class, args } => {
                let key = InstanceKey::singular(name.clone());
                let id = construct_instance(&mut h, &mut env, class, key.clone(), args)?;
                instances.push((key, id));
                globals.insert(name.clone(), Value::Ref(id));
            }
            SetupStmt::Family { name, binder, size, class, args } => {
                let n = family_size(&mut h, &mut env, name, size)?;
                let mut members = Vec::with_capacity(n);
                for k in 0..n {
                    let key = InstanceKey::member(name.clone(), k);
                    let args_at_k: Vec<Expr> = args
                        .iter()
                        .map(|a| subst_var(a, binder, &Expr::int(BigInt::from(k))))
                        .collect();
                    let id =
                        construct_instance(&mut h, &mut env, class, key.clone(), &args_at_k)?;
                    instances.push((key, id));
                    members.push(Value::Ref(id));
                }
                globals.insert(name.clone(), Value::Seq(members));
            }
        }
    }

    Ok(World { heap: h.heap, globals, instances, checks: h.checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn world_of(src: &str, params: &[(&str, i64)]) -> World {
        let p = parse(src).expect("parse");
        let chor = p.choreography().unwrap();
        let map: BTreeMap<String, Value> =
            params.iter().map(|(k, v)| (k.to_string(), Value::int(*v))).collect();
        check_params(&chor.params, &map).unwrap();
        construct_world(&p, &setup_stmts(chor), &map).unwrap()
    }

    const SRC: &str = r#"
class Cell {
  int x;

  constructor(int v) {
    this.x := v;
  }
}

choreography T(int n) {
  endpoint a = Cell(10);
  endpoint F[i := 0 .. n] = Cell(i * 2);
  endpoint b = Cell(a.x + 1);
  run {
  }
}
"#;

    #[test]
    fn instances_are_constructed_in_order_with_seeded_fields() {
        let w = world_of(SRC, &[("n", 3)]);
        assert_eq!(w.instances.len(), 5);
        assert_eq!(w.instances[0].0.to_string(), "a");
        assert_eq!(w.instances[1].0.to_string(), "F[0]");
        assert_eq!(w.instances[3].0.to_string(), "F[2]");
        assert_eq!(w.instances[4].0.to_string(), "b");
        // Ids are dense in construction order.
        assert_eq!(w.instances[4].1, ObjId(4));
        // Family members are seeded individually.
        assert_eq!(w.heap.read(ObjId(2), "x").unwrap(), Value::int(2));
        assert_eq!(w.heap.read(ObjId(3), "x").unwrap(), Value::int(4));
        // Later singulars can read earlier ones.
        assert_eq!(w.heap.read(ObjId(4), "x").unwrap(), Value::int(11));
        // The family binding is a sequence of references.
        assert_eq!(
            w.globals.get("F").unwrap(),
            &Value::Seq(vec![Value::Ref(ObjId(1)), Value::Ref(ObjId(2)), Value::Ref(ObjId(3))])
        );
    }

    #[test]
    fn empty_family_constructs_nothing() {
        let w = world_of(SRC, &[("n", 0)]);
        assert_eq!(w.instances.len(), 2);
        assert_eq!(w.globals.get("F").unwrap(), &Value::Seq(vec![]));
    }

    #[test]
    fn negative_family_size_is_fatal() {
        let p = parse(SRC).expect("parse");
        let chor = p.choreography().unwrap();
        let mut map = BTreeMap::new();
        map.insert("n".to_string(), Value::int(-1));
        let err = construct_world(&p, &setup_stmts(chor), &map).unwrap_err();
        assert!(err.msg.contains("negative size"), "{}", err.msg);
    }

    #[test]
    fn param_checking_rejects_gaps_and_extras() {
        let p = parse(SRC).expect("parse");
        let chor = p.choreography().unwrap();
        assert!(check_params(&chor.params, &BTreeMap::new()).is_err());
        let mut map = BTreeMap::new();
        map.insert("n".to_string(), Value::Bool(true));
        assert!(check_params(&chor.params, &map).is_err());
        map.insert("n".to_string(), Value::int(1));
        map.insert("zz".to_string(), Value::int(1));
        assert!(check_params(&chor.params, &map).is_err());
    }
}
