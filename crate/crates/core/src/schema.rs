//! Flat output schemas: a map from field name to expected value kind.
//!
//! Schemas describe the top level of a response body map. They drive two
//! things: contract validation of decoded responses, and the compatibility
//! test used when the registry looks for an equivalent provider after a
//! failure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FrameworkError, Result};
use crate::value::{CanonicalValue, ValueKind};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub fields: BTreeMap<String, ValueKind>,
}

impl Schema {
    pub fn new(fields: impl IntoIterator<Item = (String, ValueKind)>) -> Schema {
        Schema { fields: fields.into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Validates a response body against this schema. The body must be a map
    /// carrying every declared field with the declared kind. Extra fields are
    /// permitted so a richer provider still satisfies a narrower contract.
    pub fn validate(&self, body: &CanonicalValue) -> Result<()> {
        if self.fields.is_empty() {
            return Ok(());
        }
        let map = body.as_map().ok_or_else(|| {
            FrameworkError::contract(format!(
                "schema expects a map body, got {}",
                body.kind()
            ))
        })?;
        for (field, kind) in &self.fields {
            match map.get(field) {
                None => {
                    return Err(FrameworkError::contract(format!(
                        "missing required field `{field}`"
                    )))
                }
                Some(value) if value.kind() != *kind => {
                    return Err(FrameworkError::contract(format!(
                        "field `{field}` has kind {}, expected {kind}",
                        value.kind()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// True when `candidate` can stand in for a provider whose contract is
    /// this schema: every field this schema names must exist in the candidate
    /// with the same kind. An empty reference schema is satisfied by anyone;
    /// an empty candidate satisfies only an empty reference.
    pub fn satisfied_by(&self, candidate: &Schema) -> bool {
        self.fields.iter().all(|(field, kind)| candidate.fields.get(field) == Some(kind))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(pairs: &[(&str, ValueKind)]) -> Schema {
        Schema::new(pairs.iter().map(|(k, v)| (k.to_string(), *v)))
    }

    #[test]
    fn validate_accepts_extra_fields() {
        let s = schema(&[("temp_c", ValueKind::Float)]);
        let body = CanonicalValue::map([
            ("temp_c".to_string(), CanonicalValue::Float(21.5)),
            ("unit".to_string(), CanonicalValue::str("celsius")),
        ]);
        assert!(s.validate(&body).is_ok());
    }

    #[test]
    fn validate_rejects_missing_and_mistyped() {
        let s = schema(&[("temp_c", ValueKind::Float)]);
        assert!(s.validate(&CanonicalValue::map([])).is_err());
        let wrong = CanonicalValue::map([("temp_c".to_string(), CanonicalValue::str("21.5"))]);
        assert!(s.validate(&wrong).is_err());
    }

    #[test]
    fn empty_schema_accepts_anything() {
        assert!(Schema::default().validate(&CanonicalValue::Int(7)).is_ok());
    }

    #[test]
    fn satisfied_by_requires_superset_with_matching_kinds() {
        let reference = schema(&[("temp_c", ValueKind::Float)]);
        let wider = schema(&[("temp_c", ValueKind::Float), ("humidity", ValueKind::Float)]);
        let mistyped = schema(&[("temp_c", ValueKind::Str)]);
        assert!(reference.satisfied_by(&wider));
        assert!(!reference.satisfied_by(&mistyped));
        assert!(!reference.satisfied_by(&Schema::default()));
        assert!(Schema::default().satisfied_by(&reference));
    }
}
