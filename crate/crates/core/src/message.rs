//! The canonical message envelope.
//!
//! A message is the unit that travels between consumer, gateway, and
//! provider. The envelope is format-neutral; codecs turn it into concrete
//! JSON or XML bytes and back without loss.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capability::Capability;
use crate::error::{FrameworkError, Result};
use crate::value::{CanonicalValue, MAX_DEPTH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalMessage {
    /// Unique per message within a deployment.
    pub message_id: String,
    /// For responses, the `message_id` of the request being answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_id: Option<String>,
    /// The capability this message requests or answers.
    pub capability: Capability,
    /// Milliseconds since the deployment epoch at send time.
    pub issued_at_ms: u64,
    /// Flat string metadata, e.g. the consumer id or a trace tag.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    pub body: CanonicalValue,
}

impl CanonicalMessage {
    pub fn request(
        message_id: impl Into<String>,
        capability: Capability,
        issued_at_ms: u64,
        body: CanonicalValue,
    ) -> CanonicalMessage {
        CanonicalMessage {
            message_id: message_id.into(),
            correlation_id: None,
            capability,
            issued_at_ms,
            headers: BTreeMap::new(),
            body,
        }
    }

    /// Builds the response envelope for this message. Response ids are
    /// derived from the request id so a request has exactly one response
    /// identity no matter which provider answers.
    pub fn reply(&self, issued_at_ms: u64, body: CanonicalValue) -> CanonicalMessage {
        CanonicalMessage {
            message_id: format!("r:{}", self.message_id),
            correlation_id: Some(self.message_id.clone()),
            capability: self.capability.clone(),
            issued_at_ms,
            headers: BTreeMap::new(),
            body,
        }
    }

    pub fn with_header(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.insert(key.into(), value.into());
        self
    }

    /// Envelope invariants: non-empty ids, non-empty header keys, and a body
    /// that passes the value checks.
    pub fn validate(&self) -> Result<()> {
        if self.message_id.is_empty() {
            return Err(FrameworkError::contract("message_id must not be empty"));
        }
        if let Some(corr) = &self.correlation_id {
            if corr.is_empty() {
                return Err(FrameworkError::contract("correlation_id must not be empty"));
            }
        }
        for key in self.headers.keys() {
            if key.is_empty() {
                return Err(FrameworkError::contract("header keys must not be empty"));
            }
        }
        self.body.check(MAX_DEPTH)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(s: &str) -> Capability {
        Capability::parse(s).unwrap()
    }

    #[test]
    fn reply_correlates_to_request() {
        let req = CanonicalMessage::request("m-1", cap("sensor.temp.read"), 10, CanonicalValue::Null);
        let resp = req.reply(15, CanonicalValue::Int(21));
        assert_eq!(resp.message_id, "r:m-1");
        assert_eq!(resp.correlation_id.as_deref(), Some("m-1"));
        assert_eq!(resp.capability, req.capability);
    }

    #[test]
    fn validate_rejects_empty_ids() {
        let mut msg = CanonicalMessage::request("m-1", cap("a"), 0, CanonicalValue::Null);
        msg.message_id.clear();
        assert!(msg.validate().is_err());
    }
}
