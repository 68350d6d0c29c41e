//! The canonical value tree: the format-neutral payload model.
//!
//! Every wire format encodes to and decodes from this type, so producer and
//! consumer formats can differ without touching the payload semantics.
//! Floats are finite by construction rule (NaN and infinities are rejected
//! wherever values enter the system) and compare bitwise, which makes
//! equality a proper equivalence relation.

use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FrameworkError, Result};

/// Maximum nesting depth of a value tree. A bare scalar has depth 1.
pub const MAX_DEPTH: usize = 32;

#[derive(Debug, Clone)]
pub enum CanonicalValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<CanonicalValue>),
    Map(BTreeMap<String, CanonicalValue>),
}

/// The seven value kinds, used by schemas and the XML type tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Null,
    Bool,
    Int,
    Float,
    Str,
    List,
    Map,
}

impl ValueKind {
    pub const ALL: [ValueKind; 7] = [
        ValueKind::Null,
        ValueKind::Bool,
        ValueKind::Int,
        ValueKind::Float,
        ValueKind::Str,
        ValueKind::List,
        ValueKind::Map,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ValueKind::Null => "null",
            ValueKind::Bool => "bool",
            ValueKind::Int => "int",
            ValueKind::Float => "float",
            ValueKind::Str => "str",
            ValueKind::List => "list",
            ValueKind::Map => "map",
        }
    }

    pub fn parse(s: &str) -> Option<ValueKind> {
        ValueKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for ValueKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl CanonicalValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            CanonicalValue::Null => ValueKind::Null,
            CanonicalValue::Bool(_) => ValueKind::Bool,
            CanonicalValue::Int(_) => ValueKind::Int,
            CanonicalValue::Float(_) => ValueKind::Float,
            CanonicalValue::Str(_) => ValueKind::Str,
            CanonicalValue::List(_) => ValueKind::List,
            CanonicalValue::Map(_) => ValueKind::Map,
        }
    }

    pub fn str(s: impl Into<String>) -> CanonicalValue {
        CanonicalValue::Str(s.into())
    }

    pub fn map(entries: impl IntoIterator<Item = (String, CanonicalValue)>) -> CanonicalValue {
        CanonicalValue::Map(entries.into_iter().collect())
    }

    pub fn as_map(&self) -> Option<&BTreeMap<String, CanonicalValue>> {
        match self {
            CanonicalValue::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            CanonicalValue::List(items) => {
                1 + items.iter().map(CanonicalValue::depth).max().unwrap_or(0)
            }
            CanonicalValue::Map(entries) => {
                1 + entries.values().map(CanonicalValue::depth).max().unwrap_or(0)
            }
            _ => 1,
        }
    }

    /// Checks the structural invariants: finite floats, no empty map keys,
    /// nesting depth within `max_depth`.
    pub fn check(&self, max_depth: usize) -> Result<()> {
        self.check_at(max_depth, 1)
    }

    fn check_at(&self, max_depth: usize, depth: usize) -> Result<()> {
        if depth > max_depth {
            return Err(FrameworkError::contract(format!(
                "value tree exceeds depth limit {max_depth}"
            )));
        }
        match self {
            CanonicalValue::Float(f) if !f.is_finite() => Err(FrameworkError::contract(
                "float values must be finite (NaN and infinities are not representable)",
            )),
            CanonicalValue::List(items) => {
                for item in items {
                    item.check_at(max_depth, depth + 1)?;
                }
                Ok(())
            }
            CanonicalValue::Map(entries) => {
                for (key, value) in entries {
                    if key.is_empty() {
                        return Err(FrameworkError::contract("map keys must not be empty"));
                    }
                    value.check_at(max_depth, depth + 1)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

// Floats compare bitwise so that equality is reflexive even for values that
// slipped past the finite check, and -0.0 is distinguished from 0.0.
impl PartialEq for CanonicalValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (CanonicalValue::Null, CanonicalValue::Null) => true,
            (CanonicalValue::Bool(a), CanonicalValue::Bool(b)) => a == b,
            (CanonicalValue::Int(a), CanonicalValue::Int(b)) => a == b,
            (CanonicalValue::Float(a), CanonicalValue::Float(b)) => a.to_bits() == b.to_bits(),
            (CanonicalValue::Str(a), CanonicalValue::Str(b)) => a == b,
            (CanonicalValue::List(a), CanonicalValue::List(b)) => a == b,
            (CanonicalValue::Map(a), CanonicalValue::Map(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for CanonicalValue {}

impl Serialize for CanonicalValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CanonicalValue::Null => serializer.serialize_unit(),
            CanonicalValue::Bool(b) => serializer.serialize_bool(*b),
            CanonicalValue::Int(i) => serializer.serialize_i64(*i),
            CanonicalValue::Float(f) => serializer.serialize_f64(*f),
            CanonicalValue::Str(s) => serializer.serialize_str(s),
            CanonicalValue::List(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            CanonicalValue::Map(entries) => {
                let mut map = serializer.serialize_map(Some(entries.len()))?;
                for (key, value) in entries {
                    map.serialize_entry(key, value)?;
                }
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for CanonicalValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        CanonicalValue::try_from(&raw).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<&serde_json::Value> for CanonicalValue {
    type Error = FrameworkError;

    fn try_from(raw: &serde_json::Value) -> Result<CanonicalValue> {
        match raw {
            serde_json::Value::Null => Ok(CanonicalValue::Null),
            serde_json::Value::Bool(b) => Ok(CanonicalValue::Bool(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(CanonicalValue::Int(i))
                } else if n.is_u64() {
                    Err(FrameworkError::contract(format!(
                        "integer out of signed 64-bit range: {n}"
                    )))
                } else if let Some(f) = n.as_f64().filter(|f| f.is_finite()) {
                    Ok(CanonicalValue::Float(f))
                } else {
                    Err(FrameworkError::contract(format!("unrepresentable number: {n}")))
                }
            }
            serde_json::Value::String(s) => Ok(CanonicalValue::Str(s.clone())),
            serde_json::Value::Array(items) => Ok(CanonicalValue::List(
                items.iter().map(CanonicalValue::try_from).collect::<Result<_>>()?,
            )),
            serde_json::Value::Object(entries) => {
                let mut map = BTreeMap::new();
                for (key, value) in entries {
                    if key.is_empty() {
                        return Err(FrameworkError::contract("map keys must not be empty"));
                    }
                    map.insert(key.clone(), CanonicalValue::try_from(value)?);
                }
                Ok(CanonicalValue::Map(map))
            }
        }
    }
}

impl From<&CanonicalValue> for serde_json::Value {
    fn from(value: &CanonicalValue) -> serde_json::Value {
        match value {
            CanonicalValue::Null => serde_json::Value::Null,
            CanonicalValue::Bool(b) => serde_json::Value::Bool(*b),
            CanonicalValue::Int(i) => serde_json::Value::from(*i),
            CanonicalValue::Float(f) => {
                serde_json::Number::from_f64(*f).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
            }
            CanonicalValue::Str(s) => serde_json::Value::String(s.clone()),
            CanonicalValue::List(items) => {
                serde_json::Value::Array(items.iter().map(serde_json::Value::from).collect())
            }
            CanonicalValue::Map(entries) => {
                let mut obj = serde_json::Map::new();
                for (key, value) in entries {
                    obj.insert(key.clone(), serde_json::Value::from(value));
                }
                serde_json::Value::Object(obj)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_counts_nesting() {
        assert_eq!(CanonicalValue::Int(1).depth(), 1);
        let nested = CanonicalValue::List(vec![CanonicalValue::List(vec![CanonicalValue::Null])]);
        assert_eq!(nested.depth(), 3);
    }

    #[test]
    fn check_rejects_nan_and_empty_keys() {
        assert!(CanonicalValue::Float(f64::NAN).check(MAX_DEPTH).is_err());
        assert!(CanonicalValue::Float(f64::INFINITY).check(MAX_DEPTH).is_err());
        let bad = CanonicalValue::map([(String::new(), CanonicalValue::Null)]);
        assert!(bad.check(MAX_DEPTH).is_err());
    }

    #[test]
    fn check_rejects_overdeep_trees() {
        let mut v = CanonicalValue::Int(0);
        for _ in 0..MAX_DEPTH {
            v = CanonicalValue::List(vec![v]);
        }
        assert!(v.check(MAX_DEPTH).is_err());
    }

    #[test]
    fn float_equality_is_bitwise() {
        assert_ne!(CanonicalValue::Float(0.0), CanonicalValue::Float(-0.0));
        assert_eq!(CanonicalValue::Float(1.5), CanonicalValue::Float(1.5));
    }

    #[test]
    fn json_conversion_rejects_u64_overflow() {
        let raw: serde_json::Value = serde_json::from_str("18446744073709551615").unwrap();
        assert!(CanonicalValue::try_from(&raw).is_err());
    }
}
