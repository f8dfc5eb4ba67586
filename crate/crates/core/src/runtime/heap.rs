//! Owner-tagged heap and the fractional permission ledger.
//!
//! Every object is stamped at construction with the endpoint instance that
//! owns it; the tag never changes. The ledger tracks, per `(object, field)`
//! location, how much permission each instance holds plus what is in flight
//! on a channel. Construction establishes exactly `1` per location, and the
//! ledger only ever *moves* permission, so the per-location total is a
//! run-long invariant that [`PermLedger::audit`] re-checks after every
//! transfer.

use super::value::{fatal, Fatal, Frac, ObjId, Value};
use crate::ast::Type;
use num_bigint::BigInt;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// One endpoint instance: a singular endpoint or one member of a family.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct InstanceKey {
    pub sort: String,
    pub index: Option<BigInt>,
}

impl InstanceKey {
    pub fn singular(sort: impl Into<String>) -> InstanceKey {
        InstanceKey { sort: sort.into(), index: None }
    }

    pub fn member(sort: impl Into<String>, index: impl Into<BigInt>) -> InstanceKey {
        InstanceKey { sort: sort.into(), index: Some(index.into()) }
    }
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.index {
            None => f.write_str(&self.sort),
            Some(ix) => write!(f, "{}[{}]", self.sort, ix),
        }
    }
}

/// A heap object: its class, its owner, and its field values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Object {
    pub class: String,
    pub owner: InstanceKey,
    pub fields: BTreeMap<String, Value>,
}

/// The heap: objects addressed by construction-ordered ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Heap {
    objects: BTreeMap<ObjId, Object>,
    next: usize,
}

/// The default value of a field type: `0`, `false`, or the empty sequence.
pub fn default_value(ty: &Type) -> Result<Value, Fatal> {
    match ty {
        Type::Int => Ok(Value::int(0)),
        Type::Bool => Ok(Value::Bool(false)),
        Type::Seq { .. } => Ok(Value::Seq(Vec::new())),
        Type::Class { name } => {
            Err(fatal(format!("field of class type `{name}` is not storable")))
        }
    }
}

impl Heap {
    pub fn new() -> Heap {
        Heap::default()
    }

    /// Allocate an object with default-initialized fields.
    pub fn alloc(
        &mut self,
        class: String,
        owner: InstanceKey,
        fields: BTreeMap<String, Value>,
    ) -> ObjId {
        let id = ObjId(self.next);
        self.next += 1;
        self.objects.insert(id, Object { class, owner, fields });
        id
    }

    /// Insert an object under a caller-chosen id (fragment merging).
    /// Returns the displaced object if the id was already taken.
    pub fn insert_raw(&mut self, id: ObjId, obj: Object) -> Option<Object> {
        self.next = self.next.max(id.0 + 1);
        self.objects.insert(id, obj)
    }

    pub fn get(&self, id: ObjId) -> Result<&Object, Fatal> {
        self.objects.get(&id).ok_or_else(|| fatal(format!("dangling reference {id}")))
    }

    pub fn get_mut(&mut self, id: ObjId) -> Result<&mut Object, Fatal> {
        self.objects.get_mut(&id).ok_or_else(|| fatal(format!("dangling reference {id}")))
    }

    pub fn read(&self, id: ObjId, field: &str) -> Result<Value, Fatal> {
        let obj = self.get(id)?;
        obj.fields.get(field).cloned().ok_or_else(|| {
            fatal(format!("object {id} of class {} has no field `{field}`", obj.class))
        })
    }

    pub fn write(&mut self, id: ObjId, field: &str, value: Value) -> Result<(), Fatal> {
        let obj = self.get_mut(id)?;
        match obj.fields.get_mut(field) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(fatal(format!(
                "object {id} of class {} has no field `{field}`",
                obj.class
            ))),
        }
    }

    pub fn objects(&self) -> impl Iterator<Item = (ObjId, &Object)> {
        self.objects.iter().map(|(id, o)| (*id, o))
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// A heap location.
pub type Loc = (ObjId, String);

/// Where detached permissions sit while neither side holds them:
/// a communication channel between two concrete instances, or the limbo
/// bucket used by user-written `exhale`/`inhale` statements.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlightKey {
    Chan { site: usize, sender: BigInt, receiver: BigInt },
    Limbo,
}

impl fmt::Display for FlightKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlightKey::Chan { site, sender, receiver } => {
                write!(f, "chan[{site}]@({sender},{receiver})")
            }
            FlightKey::Limbo => f.write_str("limbo"),
        }
    }
}

/// Fractional permission accounting per heap location.
#[derive(Debug, Clone, Default)]
pub struct PermLedger {
    /// `(object, field)` → holder → amount. Zero entries are kept so the
    /// location universe never shrinks.
    holdings: BTreeMap<Loc, BTreeMap<InstanceKey, Frac>>,
    /// Permissions detached by an exhale and not yet inhaled, FIFO per key.
    in_flight: BTreeMap<FlightKey, Vec<(Loc, Frac)>>,
    locations: BTreeSet<Loc>,
}

impl PermLedger {
    pub fn new() -> PermLedger {
        PermLedger::default()
    }

    /// Establish the construction-time grant: `owner` holds `1` on the
    /// location.
    pub fn init_location(&mut self, loc: Loc, owner: InstanceKey) {
        self.locations.insert(loc.clone());
        self.holdings.entry(loc).or_default().insert(owner, Frac::one());
    }

    pub fn held_by(&self, loc: &Loc, holder: &InstanceKey) -> Frac {
        self.holdings
            .get(loc)
            .and_then(|h| h.get(holder))
            .cloned()
            .unwrap_or_else(Frac::zero)
    }

    pub fn total_held(&self, loc: &Loc) -> Frac {
        self.holdings
            .get(loc)
            .map(|h| h.values().fold(Frac::zero(), |a, b| a + b.clone()))
            .unwrap_or_else(Frac::zero)
    }

    pub fn total_in_flight(&self, loc: &Loc) -> Frac {
        self.in_flight
            .values()
            .flat_map(|entries| entries.iter())
            .filter(|(l, _)| l == loc)
            .fold(Frac::zero(), |a, (_, f)| a + f.clone())
    }

    /// Unheld capacity at a location: what could be inhaled without any
    /// source before the total would exceed the construction-time `1`.
    pub fn unheld(&self, loc: &Loc) -> Frac {
        let used = self.total_held(loc) + self.total_in_flight(loc);
        if used >= Frac::one() {
            Frac::zero()
        } else {
            Frac::one() - used
        }
    }

    /// Subtract up to `amount` from `holder`; returns what was actually
    /// subtracted (never drives the holding negative).
    pub fn debit(&mut self, loc: &Loc, holder: &InstanceKey, amount: &Frac) -> Frac {
        let held = self.held_by(loc, holder);
        let taken = held.min(amount.clone());
        if taken.is_positive() {
            let slot = self
                .holdings
                .entry(loc.clone())
                .or_default()
                .entry(holder.clone())
                .or_insert_with(Frac::zero);
            *slot = slot.clone() - taken.clone();
        }
        taken
    }

    /// Subtract up to `amount` drawing from every holder (deterministic
    /// holder order); returns what was actually subtracted.
    pub fn debit_any(&mut self, loc: &Loc, amount: &Frac) -> Frac {
        let holders: Vec<InstanceKey> = self
            .holdings
            .get(loc)
            .map(|h| h.keys().cloned().collect())
            .unwrap_or_default();
        let mut remaining = amount.clone();
        let mut taken = Frac::zero();
        for holder in holders {
            if !remaining.is_positive() {
                break;
            }
            let got = self.debit(loc, &holder, &remaining);
            remaining = remaining - got.clone();
            taken = taken + got;
        }
        taken
    }

    pub fn credit(&mut self, loc: &Loc, holder: &InstanceKey, amount: Frac) {
        if amount.is_positive() {
            self.locations.insert(loc.clone());
            let slot = self
                .holdings
                .entry(loc.clone())
                .or_default()
                .entry(holder.clone())
                .or_insert_with(Frac::zero);
            *slot = slot.clone() + amount;
        }
    }

    /// Park a detached permission on `key`.
    pub fn flight_put(&mut self, key: FlightKey, loc: Loc, amount: Frac) {
        if amount.is_positive() {
            self.in_flight.entry(key).or_default().push((loc, amount));
        }
    }

    /// Take up to `amount` for `loc` out of `key`'s in-flight entries,
    /// oldest first; returns what was taken.
    pub fn flight_take(&mut self, key: &FlightKey, loc: &Loc, amount: &Frac) -> Frac {
        let Some(entries) = self.in_flight.get_mut(key) else {
            return Frac::zero();
        };
        let mut remaining = amount.clone();
        let mut taken = Frac::zero();
        for (l, f) in entries.iter_mut() {
            if !remaining.is_positive() {
                break;
            }
            if l != loc {
                continue;
            }
            let got = f.clone().min(remaining.clone());
            *f = f.clone() - got.clone();
            remaining = remaining - got.clone();
            taken = taken + got;
        }
        entries.retain(|(_, f)| f.is_positive());
        taken
    }

    /// Conservation audit: every location's holdings plus in-flight must sum
    /// to exactly `1`. Returns a violation description per broken location.
    pub fn audit(&self) -> Vec<String> {
        let mut violations = Vec::new();
        for loc in &self.locations {
            let total = self.total_held(loc) + self.total_in_flight(loc);
            if total != Frac::one() {
                violations.push(format!(
                    "location {}.{} totals {} instead of 1",
                    loc.0, loc.1, total
                ));
            }
        }
        violations
    }

    pub fn locations(&self) -> impl Iterator<Item = &Loc> {
        self.locations.iter()
    }
}

/// Read/write sets of one `par` iteration, for the pairwise disjointness
/// check. Permission accounting (exhale/inhale/assert evaluation) does not
/// count as a data access and is excluded by the interpreter.
#[derive(Debug, Clone, Default)]
pub struct Footprint {
    pub reads: BTreeSet<Loc>,
    pub writes: BTreeSet<Loc>,
}

impl Footprint {
    /// Locations that make `self` and `other` conflict: write∩write plus
    /// write∩read in both directions.
    pub fn conflicts(&self, other: &Footprint) -> Vec<Loc> {
        let mut out = BTreeSet::new();
        for w in self.writes.intersection(&other.writes) {
            out.insert(w.clone());
        }
        for w in self.writes.intersection(&other.reads) {
            out.insert(w.clone());
        }
        for w in other.writes.intersection(&self.reads) {
            out.insert(w.clone());
        }
        out.into_iter().collect()
    }
}
