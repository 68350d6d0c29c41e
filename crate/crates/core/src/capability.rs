//! Capability names: the discovery key for everything a device offers.
//!
//! A capability is a dot-delimited lowercase path such as
//! `weather.temperature.read`. Discovery is indexed by capability, never by
//! device identity, so two devices offering the same capability are
//! interchangeable at routing time.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FrameworkError, Result};

pub const MAX_SEGMENTS: usize = 8;
pub const MAX_LENGTH: usize = 128;

/// A validated capability name. `parse` and `render` are inverses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Capability(String);

impl Capability {
    /// Parses a capability name.
    ///
    /// Grammar: 1..=8 segments joined by `.`, each matching
    /// `[a-z][a-z0-9_]*`, total length at most 128 bytes.
    pub fn parse(text: &str) -> Result<Capability> {
        if text.is_empty() {
            return Err(FrameworkError::contract("capability must not be empty"));
        }
        if text.len() > MAX_LENGTH {
            return Err(FrameworkError::contract(format!(
                "capability exceeds {MAX_LENGTH} bytes: {} bytes",
                text.len()
            )));
        }
        let segments: Vec<&str> = text.split('.').collect();
        if segments.len() > MAX_SEGMENTS {
            return Err(FrameworkError::contract(format!(
                "capability has {} segments, maximum is {MAX_SEGMENTS}",
                segments.len()
            )));
        }
        for segment in &segments {
            check_segment(segment)?;
        }
        Ok(Capability(text.to_string()))
    }

    pub fn render(&self) -> &str {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    pub fn segment_count(&self) -> usize {
        self.segments().count()
    }
}

pub(crate) fn check_segment(segment: &str) -> Result<()> {
    let mut chars = segment.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        Some(c) => {
            return Err(FrameworkError::contract(format!(
                "capability segment must start with a lowercase letter, got {c:?}"
            )))
        }
        None => return Err(FrameworkError::contract("empty capability segment")),
    }
    for c in chars {
        if !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
            return Err(FrameworkError::contract(format!(
                "invalid character {c:?} in capability segment {segment:?}"
            )));
        }
    }
    Ok(())
}

impl std::fmt::Display for Capability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Capability {
    type Err = FrameworkError;

    fn from_str(s: &str) -> Result<Self> {
        Capability::parse(s)
    }
}

impl Serialize for Capability {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Capability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Capability::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;

    #[test]
    fn parses_well_formed_names() {
        let cap = Capability::parse("weather.temperature.read").unwrap();
        assert_eq!(cap.segment_count(), 3);
        assert_eq!(cap.render(), "weather.temperature.read");
    }

    #[test]
    fn rejects_empty() {
        let err = Capability::parse("").unwrap_err();
        assert_eq!(err.kind, ErrorKind::ContractViolation);
    }

    // Table-driven walk over every grammar violation class.
    #[test]
    fn rejects_malformed_names() {
        let cases: &[(&str, &str)] = &[
            ("A.b", "uppercase first segment"),
            ("a.B", "uppercase second segment"),
            ("1a.b", "digit-leading segment"),
            ("_a.b", "underscore-leading segment"),
            ("a..b", "empty middle segment"),
            (".a", "empty leading segment"),
            ("a.", "empty trailing segment"),
            ("a.b-c", "hyphen in segment"),
            ("a. b", "space in segment"),
            ("a.b.c.d.e.f.g.h.i", "nine segments"),
            ("café.read", "non-ascii"),
        ];
        for (text, why) in cases {
            let err = Capability::parse(text)
                .expect_err(&format!("{text:?} should fail: {why}"));
            assert_eq!(err.kind, ErrorKind::ContractViolation, "{why}");
        }
        let long = format!("{}.x", "a".repeat(130));
        assert!(Capability::parse(&long).is_err(), "over-length name");
    }

    #[test]
    fn round_trips() {
        for text in ["a", "a.b", "weather.temperature.read", "x9._0".replace("._0", ".f_0").as_str()] {
            let cap = Capability::parse(text).unwrap();
            assert_eq!(Capability::parse(cap.render()).unwrap(), cap);
        }
    }

    #[test]
    fn serde_rejects_invalid() {
        let ok: Capability = serde_json::from_str("\"a.b\"").unwrap();
        assert_eq!(ok.render(), "a.b");
        assert!(serde_json::from_str::<Capability>("\"A.b\"").is_err());
    }
}
