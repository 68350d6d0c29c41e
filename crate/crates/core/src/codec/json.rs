//! JsonForm: the canonical envelope as compact UTF-8 JSON.
//!
//! Top-level keys in fixed order: `id, corr, cap, ts, headers, body`.
//! `corr` is `null` for requests. Map keys inside the body appear in
//! lexicographic order because the canonical model stores them sorted.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::capability::Capability;
use crate::error::{FrameworkError, Result};
use crate::message::CanonicalMessage;
use crate::value::CanonicalValue;

#[derive(Serialize)]
struct Envelope<'a> {
    id: &'a str,
    corr: Option<&'a str>,
    cap: &'a str,
    ts: u64,
    headers: &'a BTreeMap<String, String>,
    body: &'a CanonicalValue,
}

pub fn encode(msg: &CanonicalMessage) -> Vec<u8> {
    let envelope = Envelope {
        id: &msg.message_id,
        corr: msg.correlation_id.as_deref(),
        cap: msg.capability.as_str(),
        ts: msg.issued_at_ms,
        headers: &msg.headers,
        body: &msg.body,
    };
    // The envelope contains no map with non-string keys and no non-finite
    // float (callers validate first), so serialization cannot fail.
    serde_json::to_vec(&envelope).expect("envelope serializes")
}

pub fn decode(bytes: &[u8]) -> Result<CanonicalMessage> {
    let raw: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| FrameworkError::contract(format!("malformed JSON: {e}")))?;
    let obj = raw
        .as_object()
        .ok_or_else(|| FrameworkError::contract("envelope must be a JSON object"))?;

    for key in obj.keys() {
        if !matches!(key.as_str(), "id" | "corr" | "cap" | "ts" | "headers" | "body") {
            return Err(FrameworkError::contract(format!("unknown envelope key `{key}`")));
        }
    }

    let message_id = obj
        .get("id")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| FrameworkError::contract("envelope needs a string `id`"))?
        .to_string();

    let correlation_id = match obj.get("corr") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(FrameworkError::contract("`corr` must be a string or null")),
    };

    let capability = obj
        .get("cap")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| FrameworkError::contract("envelope needs a string `cap`"))
        .and_then(Capability::parse)?;

    let issued_at_ms = obj
        .get("ts")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| FrameworkError::contract("envelope needs a non-negative integer `ts`"))?;

    let mut headers = BTreeMap::new();
    if let Some(raw_headers) = obj.get("headers") {
        let map = raw_headers
            .as_object()
            .ok_or_else(|| FrameworkError::contract("`headers` must be an object"))?;
        for (key, value) in map {
            let value = value
                .as_str()
                .ok_or_else(|| FrameworkError::contract("header values must be strings"))?;
            headers.insert(key.clone(), value.to_string());
        }
    }

    let body = obj
        .get("body")
        .ok_or_else(|| FrameworkError::contract("envelope needs a `body`"))
        .and_then(CanonicalValue::try_from)?;

    Ok(CanonicalMessage { message_id, correlation_id, capability, issued_at_ms, headers, body })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(s: &str) -> Capability {
        Capability::parse(s).unwrap()
    }

    #[test]
    fn envelope_keys_in_fixed_order() {
        let msg = CanonicalMessage::request("m-1", cap("a.b"), 7, CanonicalValue::Int(21));
        let text = String::from_utf8(encode(&msg)).unwrap();
        assert_eq!(text, r#"{"id":"m-1","corr":null,"cap":"a.b","ts":7,"headers":{},"body":21}"#);
    }

    #[test]
    fn decode_rejects_unknown_keys() {
        let err = decode(br#"{"id":"m","cap":"a","ts":0,"body":null,"extra":1}"#).unwrap_err();
        assert!(err.detail.contains("unknown envelope key"));
    }

    #[test]
    fn decode_rejects_negative_and_fractional_ts() {
        assert!(decode(br#"{"id":"m","cap":"a","ts":-1,"body":null}"#).is_err());
        assert!(decode(br#"{"id":"m","cap":"a","ts":1.5,"body":null}"#).is_err());
    }

    #[test]
    fn decode_never_panics_on_junk() {
        for junk in [&b"\xff\xfe"[..], b"", b"[1,2", b"{}", b"42", b"\"x\""] {
            let _ = decode(junk);
        }
    }
}
