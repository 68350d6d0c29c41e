//! Composite service plans: how fine-grained services combine into one.

use serde::{Deserialize, Serialize};

use crate::capability::Capability;
use crate::error::{FrameworkError, Result};
use crate::schema::Schema;

/// How member calls are issued.
///
/// `Parallel` fans all members out at once, so the composite finishes when
/// the slowest member does. `Chained` issues members one after the other,
/// feeding each response body to the next member, which costs the sum of the
/// member latencies. Chained exists for pipelines that genuinely need the
/// previous step's output and as the baseline that parallel fan-out improves
/// on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Parallel,
    Chained,
}

/// One field routing rule: take `from` out of member `member`'s response
/// body and store it as `to` in the composite body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeEntry {
    pub member: usize,
    pub from: String,
    pub to: String,
}

/// The recipe for a composite service: which members to call, how to issue
/// the calls, and how to assemble the response body.
///
/// Serialized form matches the file the CLI `compose` command loads:
/// `{"capability": ..., "members": [...], "merge": [...], "mode": ...,
/// "schema": {...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeSpec {
    #[serde(rename = "capability")]
    pub composite_capability: Capability,
    pub members: Vec<Capability>,
    #[serde(rename = "merge")]
    pub merge_map: Vec<MergeEntry>,
    pub mode: ExecMode,
    #[serde(rename = "schema", default)]
    pub output_schema: Schema,
}

impl CompositeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(FrameworkError::contract(
                "a composite needs at least 2 members",
            ));
        }
        let mut targets = std::collections::BTreeSet::new();
        for entry in &self.merge_map {
            if entry.member >= self.members.len() {
                return Err(FrameworkError::contract(format!(
                    "merge entry references member {} but there are only {}",
                    entry.member,
                    self.members.len()
                )));
            }
            if entry.from.is_empty() || entry.to.is_empty() {
                return Err(FrameworkError::contract("merge fields must not be empty"));
            }
            if !targets.insert(&entry.to) {
                return Err(FrameworkError::contract(format!(
                    "merge target `{}` assigned more than once",
                    entry.to
                )));
            }
        }
        Ok(())
    }

    /// The demand signature: the member capability set, sorted and joined.
    /// Requests that combine the same capabilities count toward the same
    /// promotion counter regardless of member order or merge details.
    pub fn signature(&self) -> String {
        signature_of(&self.members)
    }
}

pub fn signature_of(members: &[Capability]) -> String {
    let mut names: Vec<&str> = members.iter().map(Capability::as_str).collect();
    names.sort_unstable();
    names.join("+")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(s: &str) -> Capability {
        Capability::parse(s).unwrap()
    }

    fn spec() -> CompositeSpec {
        CompositeSpec {
            composite_capability: cap("weather.report"),
            members: vec![cap("weather.temperature.read"), cap("weather.humidity.read")],
            merge_map: vec![
                MergeEntry { member: 0, from: "temp_c".into(), to: "temperature_c".into() },
                MergeEntry { member: 1, from: "rh_pct".into(), to: "humidity_pct".into() },
            ],
            mode: ExecMode::Parallel,
            output_schema: Schema::default(),
        }
    }

    #[test]
    fn valid_spec_passes() {
        assert!(spec().validate().is_ok());
    }

    #[test]
    fn single_member_rejected() {
        let mut s = spec();
        s.members.truncate(1);
        assert!(s.validate().is_err());
    }

    #[test]
    fn out_of_range_member_rejected() {
        let mut s = spec();
        s.merge_map[1].member = 2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_merge_target_rejected() {
        let mut s = spec();
        s.merge_map[1].to = "temperature_c".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn signature_ignores_member_order() {
        let mut s = spec();
        let sig = s.signature();
        s.members.reverse();
        assert_eq!(s.signature(), sig);
        assert_eq!(sig, "weather.humidity.read+weather.temperature.read");
    }

    #[test]
    fn file_form_uses_short_keys() {
        let json = serde_json::to_value(spec()).unwrap();
        assert!(json.get("capability").is_some());
        assert!(json.get("merge").is_some());
        assert!(json.get("schema").is_some());
        assert_eq!(json.get("mode").unwrap(), "parallel");
    }
}
