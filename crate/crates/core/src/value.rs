//! Records, values and signatures.
//!
//! A [`Record`] is an ordered name→value map. Every input, output and
//! context argument flowing through a caller is a record. A [`Signature`]
//! declares which parameters a callable accepts and produces.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Prefix reserved for names the runtime injects (caller id, previous stage output).
pub const RESERVED_PREFIX: &str = "__mc_";
/// Context entry carrying the id of the calling caller.
pub const ID_PARAM: &str = "__mc_id";
/// Input entry carrying the previous stage's output in a sequential chain.
pub const PREV_PARAM: &str = "__mc_prev";

/// Largest integer an `f64` represents exactly; integral numbers up to this
/// magnitude serialize as JSON integers.
const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

/// A single argument or output value.
#[derive(Debug, Clone)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Text(String),
    List(Vec<Value>),
    Map(Record),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bool(_) => ValueKind::Bool,
            Value::Number(_) => ValueKind::Number,
            Value::Text(_) => ValueKind::Text,
            Value::List(_) => ValueKind::List,
            Value::Map(_) => ValueKind::Map,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Number(_) => 0,
            Value::Text(_) => 1,
            Value::Bool(_) => 2,
            Value::List(_) => 3,
            Value::Map(_) => 4,
        }
    }

    /// Total order used wherever a deterministic choice between values is
    /// needed: numbers ascending, then strings lexicographically, then
    /// booleans, lists and maps.
    pub fn canonical_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => {
                if a == b {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::List(a), Value::List(b)) => {
                for (x, y) in a.iter().zip(b.iter()) {
                    let ord = x.canonical_cmp(y);
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                a.len().cmp(&b.len())
            }
            (Value::Map(a), Value::Map(b)) => {
                let mut ea: Vec<_> = a.iter().collect();
                let mut eb: Vec<_> = b.iter().collect();
                ea.sort_by(|x, y| x.0.cmp(y.0));
                eb.sort_by(|x, y| x.0.cmp(y.0));
                for ((ka, va), (kb, vb)) in ea.iter().zip(eb.iter()) {
                    let ord = ka.cmp(kb).then_with(|| va.canonical_cmp(vb));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                }
                ea.len().cmp(&eb.len())
            }
            _ => self.rank().cmp(&other.rank()),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Number(x) => x.is_finite(),
            Value::List(items) => items.iter().all(Value::is_finite),
            Value::Map(r) => r.iter().all(|(_, v)| v.is_finite()),
            _ => true,
        }
    }
}

/// Structural equality; maps compare without regard to entry order.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_cmp(other) == Ordering::Equal
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Number(x)
    }
}

impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Number(x as f64)
    }
}

impl From<i32> for Value {
    fn from(x: i32) -> Self {
        Value::Number(x as f64)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<Record> for Value {
    fn from(r: Record) -> Self {
        Value::Map(r)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Number(x) => {
                if libm::trunc(*x) == *x && libm::fabs(*x) <= MAX_EXACT_INT {
                    s.serialize_i64(*x as i64)
                } else {
                    s.serialize_f64(*x)
                }
            }
            Value::Text(t) => s.serialize_str(t),
            Value::List(items) => {
                let mut seq = s.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Value::Map(r) => r.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        struct ValueVisitor;

        impl<'de> Visitor<'de> for ValueVisitor {
            type Value = Value;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, string, boolean, list or map")
            }

            fn visit_bool<E>(self, b: bool) -> core::result::Result<Value, E> {
                Ok(Value::Bool(b))
            }

            fn visit_i64<E>(self, x: i64) -> core::result::Result<Value, E> {
                Ok(Value::Number(x as f64))
            }

            fn visit_u64<E>(self, x: u64) -> core::result::Result<Value, E> {
                Ok(Value::Number(x as f64))
            }

            fn visit_f64<E>(self, x: f64) -> core::result::Result<Value, E> {
                Ok(Value::Number(x))
            }

            fn visit_str<E>(self, s: &str) -> core::result::Result<Value, E> {
                Ok(Value::Text(s.to_string()))
            }

            fn visit_string<E>(self, s: String) -> core::result::Result<Value, E> {
                Ok(Value::Text(s))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> core::result::Result<Value, A::Error> {
                let mut items = Vec::new();
                while let Some(item) = seq.next_element()? {
                    items.push(item);
                }
                Ok(Value::List(items))
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> core::result::Result<Value, A::Error> {
                RecordVisitor.visit_map(map).map(Value::Map)
            }
        }

        d.deserialize_any(ValueVisitor)
    }
}

/// Ordered map from parameter name to value. Names are unique.
///
/// Equality ignores entry order; serialization preserves it.
#[derive(Debug, Clone, Default)]
pub struct Record {
    entries: Vec<(String, Value)>,
}

impl PartialEq for Record {
    fn eq(&self, other: &Self) -> bool {
        self.same_keys(other)
            && self.iter().all(|(k, v)| other.get(k).is_some_and(|w| v == w))
    }
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces an entry. Replacement keeps the original position.
    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<Value>) {
        let name = name.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == name) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((name, value)),
        }
    }

    /// Builder form of [`Record::insert`].
    pub fn with(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Value::as_f64)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        let idx = self.entries.iter().position(|(k, _)| k == name)?;
        Some(self.entries.remove(idx).1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Entries restricted to `names`, in the order `names` lists them.
    /// Missing names are skipped.
    pub fn project<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Record {
        let mut out = Record::new();
        for name in names {
            if let Some(v) = self.get(name) {
                out.entries.push((name.to_string(), v.clone()));
            }
        }
        out
    }

    /// Copies every entry of `other` into `self`, overriding duplicates.
    pub fn extend_from(&mut self, other: &Record) {
        for (k, v) in other.iter() {
            self.insert(k, v.clone());
        }
    }

    /// True when both records hold the same names, regardless of order.
    pub fn same_keys(&self, other: &Record) -> bool {
        self.len() == other.len() && self.keys().all(|k| other.contains(k))
    }
}

impl FromIterator<(String, Value)> for Record {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        let mut r = Record::new();
        for (k, v) in iter {
            r.insert(k, v);
        }
        r
    }
}

impl Serialize for Record {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

struct RecordVisitor;

impl<'de> Visitor<'de> for RecordVisitor {
    type Value = Record;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a map of parameter names to values")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> core::result::Result<Record, A::Error> {
        let mut r = Record::new();
        while let Some((k, v)) = map.next_entry::<String, Value>()? {
            if r.contains(&k) {
                return Err(de::Error::custom(alloc::format!("duplicate parameter `{k}`")));
            }
            r.entries.push((k, v));
        }
        Ok(r)
    }
}

impl<'de> Deserialize<'de> for Record {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        d.deserialize_map(RecordVisitor)
    }
}

/// Declared kind of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Number,
    Text,
    Bool,
    List,
    Map,
    Any,
}

impl ValueKind {
    pub fn admits(self, v: &Value) -> bool {
        self == ValueKind::Any || v.kind() == self
    }
}

/// Ordered list of declared parameters; serializes as a `{name: kind}` map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Params(pub Vec<(String, ValueKind)>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, kind: ValueKind) -> Self {
        self.0.push((name.into(), kind));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    pub fn kind_of(&self, name: &str) -> Option<ValueKind> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, k)| *k)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.kind_of(name).is_some()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every name in `self` also appears in `other`.
    pub fn is_subset_of(&self, other: &Params) -> bool {
        self.names().all(|n| other.contains(n))
    }

    /// Same names and kinds, in any order.
    pub fn same_set(&self, other: &Params) -> bool {
        self.len() == other.len()
            && self.0.iter().all(|(n, k)| other.kind_of(n) == Some(*k))
    }

    /// Checks that `record` holds exactly these parameters with admissible values.
    pub fn check(&self, record: &Record, what: &str) -> Result<()> {
        for (name, kind) in &self.0 {
            match record.get(name) {
                None => {
                    return Err(Error::NonConforming(alloc::format!(
                        "{what}: missing parameter `{name}`"
                    )))
                }
                Some(v) if !kind.admits(v) => {
                    return Err(Error::NonConforming(alloc::format!(
                        "{what}: parameter `{name}` expects {kind:?}, got {:?}",
                        v.kind()
                    )))
                }
                Some(v) if !v.is_finite() => {
                    return Err(Error::NonConforming(alloc::format!(
                        "{what}: parameter `{name}` is not finite"
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = record.keys().find(|k| !self.contains(k)) {
            return Err(Error::NonConforming(alloc::format!(
                "{what}: unexpected parameter `{extra}`"
            )));
        }
        Ok(())
    }
}

impl Serialize for Params {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (n, k) in &self.0 {
            map.serialize_entry(n, k)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Params {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        struct ParamsVisitor;

        impl<'de> Visitor<'de> for ParamsVisitor {
            type Value = Params;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of parameter names to kinds")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> core::result::Result<Params, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, ValueKind>()? {
                    out.push((k, v));
                }
                Ok(Params(out))
            }
        }

        d.deserialize_map(ParamsVisitor)
    }
}

/// Declared inputs, outputs and context parameters of a caller or callable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub inputs: Params,
    pub outputs: Params,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub context_params: Params,
}

impl Signature {
    pub fn new(inputs: Params, outputs: Params) -> Self {
        Self { inputs, outputs, context_params: Params::new() }
    }

    pub fn with_context(mut self, context_params: Params) -> Self {
        self.context_params = context_params;
        self
    }

    /// Names unique within each list, lists pairwise disjoint, no reserved names.
    pub fn validate(&self) -> Result<()> {
        let groups = [
            ("input", &self.inputs),
            ("output", &self.outputs),
            ("context", &self.context_params),
        ];
        let mut seen: Vec<&str> = Vec::new();
        for (label, params) in groups {
            for name in params.names() {
                if name.is_empty() {
                    return Err(Error::InvalidSignature(alloc::format!("empty {label} parameter name")));
                }
                if name.starts_with(RESERVED_PREFIX) {
                    return Err(Error::InvalidSignature(alloc::format!(
                        "{label} parameter `{name}` uses the reserved prefix `{RESERVED_PREFIX}`"
                    )));
                }
                if seen.contains(&name) {
                    return Err(Error::InvalidSignature(alloc::format!(
                        "parameter `{name}` declared more than once"
                    )));
                }
                seen.push(name);
            }
        }
        if self.outputs.is_empty() {
            return Err(Error::InvalidSignature("signature declares no outputs".into()));
        }
        Ok(())
    }
}
