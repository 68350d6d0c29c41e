//! Contract decoupling: lossless conversion between canonical messages and
//! the concrete wire formats.
//!
//! Producers and consumers each pick a format; the codec moves payloads
//! between them without the two sides coordinating. Both encoders are pure
//! functions of the message (sorted keys, fixed envelope order), so equal
//! messages always produce identical bytes. Both decoders are total: any
//! byte input yields either a message or a contract violation, never a
//! panic.
//!
//! The concrete grammars live in `docs/wire-formats.md` next to the golden
//! files under `tests/golden/`.

mod json;
mod xml;

use crate::capability::Capability;
use crate::descriptor::WireFormat;
use crate::error::{FrameworkError, Result};
use crate::message::CanonicalMessage;

/// Wire bytes plus the routing facts a handler needs without decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMessage {
    pub format: WireFormat,
    pub bytes: Vec<u8>,
    /// The capability the sender claims these bytes target. Checked against
    /// the embedded envelope on decode.
    pub declared_capability: Capability,
}

#[derive(Debug, Clone)]
pub struct Codec {
    max_bytes: usize,
    max_depth: usize,
}

impl Default for Codec {
    fn default() -> Codec {
        Codec { max_bytes: 1 << 20, max_depth: crate::value::MAX_DEPTH }
    }
}

impl Codec {
    pub fn new(max_bytes: usize, max_depth: usize) -> Codec {
        Codec { max_bytes, max_depth }
    }

    pub fn from_config(config: &crate::config::FrameworkConfig) -> Codec {
        Codec::new(config.max_encoded_bytes, config.max_value_depth)
    }

    pub fn encode(&self, msg: &CanonicalMessage, format: WireFormat) -> Result<EncodedMessage> {
        msg.validate()?;
        msg.body.check(self.max_depth)?;
        let bytes = match format {
            WireFormat::Json => json::encode(msg),
            WireFormat::Xml => xml::encode(msg),
        };
        if bytes.len() > self.max_bytes {
            return Err(FrameworkError::contract(format!(
                "encoded message is {} bytes, limit {}",
                bytes.len(),
                self.max_bytes
            )));
        }
        Ok(EncodedMessage { format, bytes, declared_capability: msg.capability.clone() })
    }

    pub fn decode(&self, enc: &EncodedMessage) -> Result<CanonicalMessage> {
        if enc.bytes.len() > self.max_bytes {
            return Err(FrameworkError::contract(format!(
                "encoded message is {} bytes, limit {}",
                enc.bytes.len(),
                self.max_bytes
            )));
        }
        let msg = match enc.format {
            WireFormat::Json => json::decode(&enc.bytes)?,
            WireFormat::Xml => xml::decode(&enc.bytes)?,
        };
        msg.validate()?;
        msg.body.check(self.max_depth)?;
        if msg.capability != enc.declared_capability {
            return Err(FrameworkError::contract(format!(
                "payload targets `{}` but `{}` was declared",
                msg.capability, enc.declared_capability
            )));
        }
        Ok(msg)
    }

    /// Re-encodes `enc` in `target`. Passing the current format returns the
    /// input unchanged, byte for byte.
    pub fn transform(&self, enc: &EncodedMessage, target: WireFormat) -> Result<EncodedMessage> {
        if enc.format == target {
            return Ok(enc.clone());
        }
        let msg = self.decode(enc)?;
        self.encode(&msg, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::CanonicalValue;

    fn cap(s: &str) -> Capability {
        Capability::parse(s).unwrap()
    }

    fn sample() -> CanonicalMessage {
        let body = CanonicalValue::map([
            ("temp_c".to_string(), CanonicalValue::Float(21.5)),
            ("unit".to_string(), CanonicalValue::str("celsius")),
        ]);
        CanonicalMessage::request("m-000001", cap("weather.temperature.read"), 12345, body)
            .with_header("consumer", "app-1")
    }

    #[test]
    fn round_trips_both_formats() {
        let codec = Codec::default();
        let msg = sample();
        for format in [WireFormat::Json, WireFormat::Xml] {
            let enc = codec.encode(&msg, format).unwrap();
            assert_eq!(codec.decode(&enc).unwrap(), msg, "{format:?}");
        }
    }

    #[test]
    fn transform_crosses_formats_and_is_identity_on_same() {
        let codec = Codec::default();
        let msg = sample();
        let json = codec.encode(&msg, WireFormat::Json).unwrap();
        let xml = codec.transform(&json, WireFormat::Xml).unwrap();
        assert_eq!(xml.format, WireFormat::Xml);
        assert_eq!(codec.decode(&xml).unwrap(), msg);
        let same = codec.transform(&json, WireFormat::Json).unwrap();
        assert_eq!(same.bytes, json.bytes);
    }

    #[test]
    fn encode_is_deterministic() {
        let codec = Codec::default();
        let msg = sample();
        for format in [WireFormat::Json, WireFormat::Xml] {
            let a = codec.encode(&msg, format).unwrap();
            let b = codec.encode(&msg, format).unwrap();
            assert_eq!(a.bytes, b.bytes);
        }
    }

    #[test]
    fn declared_capability_mismatch_rejected() {
        let codec = Codec::default();
        let mut enc = codec.encode(&sample(), WireFormat::Json).unwrap();
        enc.declared_capability = cap("other");
        let err = codec.decode(&enc).unwrap_err();
        assert_eq!(err.kind, crate::error::ErrorKind::ContractViolation);
    }

    #[test]
    fn size_limit_enforced() {
        let codec = Codec::new(64, 32);
        let msg = CanonicalMessage::request(
            "m-1",
            cap("a"),
            0,
            CanonicalValue::str("x".repeat(200)),
        );
        assert!(codec.encode(&msg, WireFormat::Json).is_err());
    }
}
