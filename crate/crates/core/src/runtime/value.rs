//! Runtime values and exact fractional permission amounts.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Sub};

/// A hard runtime error (type confusion, out-of-range index, malformed
/// amount). Unlike check failures, these abort the run.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{msg}")]
pub struct Fatal {
    pub msg: String,
}

pub fn fatal(msg: impl Into<String>) -> Fatal {
    Fatal { msg: msg.into() }
}

/// Identity of a heap object. Assigned densely in construction order, which
/// is deterministic, so ids line up across independent runs of the same
/// program.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ObjId(pub usize);

impl fmt::Display for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// An exact fraction, always normalized. Used for permission amounts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Frac(BigRational);

impl Frac {
    pub fn new(num: BigInt, den: BigInt) -> Result<Frac, Fatal> {
        if den.is_zero() {
            return Err(fatal("fraction with zero denominator"));
        }
        Ok(Frac(BigRational::new(num, den)))
    }

    pub fn zero() -> Frac {
        Frac(BigRational::zero())
    }

    pub fn one() -> Frac {
        Frac(BigRational::one())
    }

    pub fn from_int(n: BigInt) -> Frac {
        Frac(BigRational::from_integer(n))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    /// Valid as a permission amount: `0 < self ≤ 1`.
    pub fn is_permission_amount(&self) -> bool {
        self.0.is_positive() && self.0 <= BigRational::one()
    }

    pub fn min(self, other: Frac) -> Frac {
        if self.0 <= other.0 {
            self
        } else {
            other
        }
    }
}

impl Add for Frac {
    type Output = Frac;
    fn add(self, rhs: Frac) -> Frac {
        Frac(self.0 + rhs.0)
    }
}

impl Sub for Frac {
    type Output = Frac;
    fn sub(self, rhs: Frac) -> Frac {
        Frac(self.0 - rhs.0)
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Frac {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Frac {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Frac, D::Error> {
        let text = String::deserialize(d)?;
        let (num, den) = match text.split_once('/') {
            Some((n, d)) => (n, d),
            None => (text.as_str(), "1"),
        };
        let num: BigInt = num.parse().map_err(serde::de::Error::custom)?;
        let den: BigInt = den.parse().map_err(serde::de::Error::custom)?;
        Frac::new(num, den).map_err(serde::de::Error::custom)
    }
}

mod bigint_string {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A runtime value. Integers are arbitrary precision so the reference run
/// and the endpoint runs can never diverge through overflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Int(#[serde(with = "bigint_string")] BigInt),
    Bool(bool),
    Seq(Vec<Value>),
    Ref(ObjId),
    Frac(Frac),
}

impl Value {
    pub fn int(n: impl Into<BigInt>) -> Value {
        Value::Int(n.into())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Bool(_) => "boolean",
            Value::Seq(_) => "seq",
            Value::Ref(_) => "ref",
            Value::Frac(_) => "fraction",
        }
    }

    pub fn as_int(&self) -> Result<&BigInt, Fatal> {
        match self {
            Value::Int(n) => Ok(n),
            other => Err(fatal(format!("expected an int, got a {}", other.kind_name()))),
        }
    }

    pub fn as_bool(&self) -> Result<bool, Fatal> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(fatal(format!("expected a boolean, got a {}", other.kind_name()))),
        }
    }

    pub fn as_ref_id(&self) -> Result<ObjId, Fatal> {
        match self {
            Value::Ref(id) => Ok(*id),
            other => Err(fatal(format!(
                "expected an object reference, got a {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_seq(&self) -> Result<&[Value], Fatal> {
        match self {
            Value::Seq(items) => Ok(items),
            other => Err(fatal(format!("expected a seq, got a {}", other.kind_name()))),
        }
    }

    /// Coerce to a fraction (ints promote); used for permission amounts.
    pub fn as_frac(&self) -> Result<Frac, Fatal> {
        match self {
            Value::Frac(f) => Ok(f.clone()),
            Value::Int(n) => Ok(Frac::from_int(n.clone())),
            other => Err(fatal(format!(
                "expected a fraction, got a {}",
                other.kind_name()
            ))),
        }
    }

    /// Structural equality; comparing different kinds is a type error.
    pub fn try_eq(&self, other: &Value) -> Result<bool, Fatal> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Ok(a == b),
            (Value::Bool(a), Value::Bool(b)) => Ok(a == b),
            (Value::Ref(a), Value::Ref(b)) => Ok(a == b),
            (Value::Frac(a), Value::Frac(b)) => Ok(a == b),
            (Value::Seq(a), Value::Seq(b)) => {
                if a.len() != b.len() {
                    return Ok(false);
                }
                for (x, y) in a.iter().zip(b) {
                    if !x.try_eq(y)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            _ => Err(fatal(format!(
                "cannot compare a {} with a {}",
                self.kind_name(),
                other.kind_name()
            ))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Seq(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Ref(id) => write!(f, "{id}"),
            Value::Frac(fr) => write!(f, "{fr}"),
        }
    }
}
