//! The value universe shared by the evaluator, traces and the wire protocol.
//!
//! Composite values are always kept in canonical form: set elements and
//! function domain points are strictly increasing under [`Value`]'s `Ord`,
//! which is the canonical order (Bool < Int < Str < Set < Fn < Seq across
//! kinds, natural / lexicographic / elementwise within a kind).

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;

/// A checkable datum. Records are functions from strings, tuples are
/// sequences.
///
/// The variant order is significant: the derived `Ord` ranks kinds in
/// declaration order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Int(BigInt),
    Str(Arc<str>),
    Set(Arc<[Value]>),
    Fn(Arc<[(Value, Value)]>),
    Seq(Arc<[Value]>),
}

impl Value {
    pub fn int(n: impl Into<BigInt>) -> Value {
        Value::Int(n.into())
    }

    pub fn str(s: impl AsRef<str>) -> Value {
        Value::Str(Arc::from(s.as_ref()))
    }

    /// Builds a set from arbitrary elements, sorting and deduplicating.
    pub fn set_from(elems: impl IntoIterator<Item = Value>) -> Value {
        let mut v: Vec<Value> = elems.into_iter().collect();
        v.sort();
        v.dedup();
        Value::Set(v.into())
    }

    /// Builds a set from elements already strictly increasing.
    pub(crate) fn set_sorted(elems: Vec<Value>) -> Value {
        debug_assert!(elems.windows(2).all(|w| w[0] < w[1]));
        Value::Set(elems.into())
    }

    pub fn empty_set() -> Value {
        Value::Set(Arc::from(Vec::new()))
    }

    /// Builds a function from (domain point, image) pairs. When a domain
    /// point repeats, the last pair wins. The empty function is the empty
    /// sequence.
    pub fn fn_from(pairs: impl IntoIterator<Item = (Value, Value)>) -> Value {
        let mut v: Vec<(Value, Value)> = pairs.into_iter().collect();
        // stable sort keeps insertion order among equal keys
        v.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Value, Value)> = Vec::with_capacity(v.len());
        for (k, val) in v {
            match out.last_mut() {
                Some(last) if last.0 == k => last.1 = val,
                _ => out.push((k, val)),
            }
        }
        if out.is_empty() {
            return Value::seq(Vec::new());
        }
        Value::Fn(out.into())
    }

    /// Record with string field names.
    pub fn record<K: AsRef<str>>(fields: impl IntoIterator<Item = (K, Value)>) -> Value {
        Value::fn_from(fields.into_iter().map(|(k, v)| (Value::str(k), v)))
    }

    pub fn seq(elems: Vec<Value>) -> Value {
        Value::Seq(elems.into())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "boolean",
            Value::Int(_) => "integer",
            Value::Str(_) => "string",
            Value::Set(_) => "set",
            Value::Fn(_) => "function",
            Value::Seq(_) => "sequence",
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            Value::Int(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_set(&self) -> Option<&[Value]> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn set_contains(&self, elem: &Value) -> Option<bool> {
        self.as_set().map(|s| s.binary_search(elem).is_ok())
    }

    /// Applies a function, sequence (1-based) or record to an argument.
    pub fn apply(&self, arg: &Value) -> Option<&Value> {
        match self {
            Value::Fn(pairs) => pairs
                .binary_search_by(|(k, _)| k.cmp(arg))
                .ok()
                .map(|i| &pairs[i].1),
            Value::Seq(elems) => {
                let idx: usize = arg.as_int().and_then(|n| usize::try_from(n).ok())?;
                if idx == 0 {
                    return None;
                }
                elems.get(idx - 1)
            }
            _ => None,
        }
    }

    /// Whether every composite inside this value is canonical.
    pub fn is_canonical(&self) -> bool {
        match self {
            Value::Bool(_) | Value::Int(_) | Value::Str(_) => true,
            Value::Set(s) => s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(Value::is_canonical),
            Value::Fn(p) => {
                !p.is_empty()
                    && p.windows(2).all(|w| w[0].0 < w[1].0)
                    && p.iter().all(|(k, v)| k.is_canonical() && v.is_canonical())
            }
            Value::Seq(s) => s.iter().all(Value::is_canonical),
        }
    }

    /// Rebuilds every composite through the canonicalizing constructors.
    pub fn canonicalize(&self) -> Value {
        match self {
            Value::Bool(_) | Value::Int(_) | Value::Str(_) => self.clone(),
            Value::Set(s) => Value::set_from(s.iter().map(Value::canonicalize)),
            Value::Fn(p) => Value::fn_from(p.iter().map(|(k, v)| (k.canonicalize(), v.canonicalize()))),
            Value::Seq(s) => Value::seq(s.iter().map(Value::canonicalize).collect()),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n.into())
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::str(s)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        super::text::write_value(f, self)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        super::text::write_value(f, self)
    }
}
