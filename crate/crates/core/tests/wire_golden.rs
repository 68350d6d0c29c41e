//! Frozen wire fixtures for both formats.
//!
//! The files under `tests/golden/` are the contract: producers written
//! against today's framework must keep decoding tomorrow. Any encoder change
//! that alters a single byte of these fixtures is a wire break and has to
//! fail here before it ships.

use std::path::PathBuf;

use trellis_core::codec::{Codec, EncodedMessage};
use trellis_core::descriptor::WireFormat;
use trellis_core::value::CanonicalValue;
use trellis_core::{Capability, CanonicalMessage};

fn golden(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

fn cap(s: &str) -> Capability {
    Capability::parse(s).expect("capability parses")
}

/// A plain request: one header, a flat two-field body.
fn basic() -> CanonicalMessage {
    let body = CanonicalValue::map([
        ("reading".to_string(), CanonicalValue::Float(21.5)),
        ("unit".to_string(), CanonicalValue::str("celsius")),
    ]);
    CanonicalMessage::request("m-000042", cap("env.temperature.read"), 1_723_800_000_000, body)
        .with_header("consumer", "app-1")
}

/// A correlated reply that leans on the awkward corners: characters needing
/// escapes, a mixed-type list, an empty map, and a non-latin map key.
fn nested() -> CanonicalMessage {
    let body = CanonicalValue::map([
        ("empty".to_string(), CanonicalValue::map([])),
        ("notes".to_string(), CanonicalValue::str("5 < 7 & \"ok\"")),
        (
            "samples".to_string(),
            CanonicalValue::List(vec![
                CanonicalValue::Int(-3),
                CanonicalValue::Null,
                CanonicalValue::Bool(true),
                CanonicalValue::Float(0.25),
            ]),
        ),
        ("söndag".to_string(), CanonicalValue::str("sunday")),
    ]);
    let mut msg = CanonicalMessage::request("r:m-000042", cap("env.report"), 1_723_800_000_456, body);
    msg.correlation_id = Some("m-000042".to_string());
    msg
}

fn fixtures() -> Vec<(CanonicalMessage, &'static str, WireFormat)> {
    vec![
        (basic(), "basic.json", WireFormat::Json),
        (basic(), "basic.xml", WireFormat::Xml),
        (nested(), "nested.json", WireFormat::Json),
        (nested(), "nested.xml", WireFormat::Xml),
    ]
}

#[test]
fn encoders_reproduce_the_golden_bytes_exactly() {
    let codec = Codec::default();
    for (msg, file, format) in fixtures() {
        let encoded = codec.encode(&msg, format).expect("encodes");
        let expected = golden(file);
        assert_eq!(
            String::from_utf8_lossy(&encoded.bytes),
            String::from_utf8_lossy(&expected),
            "{file} drifted"
        );
    }
}

#[test]
fn golden_bytes_decode_to_the_reference_messages() {
    let codec = Codec::default();
    for (msg, file, format) in fixtures() {
        let encoded = EncodedMessage {
            format,
            bytes: golden(file),
            declared_capability: msg.capability.clone(),
        };
        assert_eq!(codec.decode(&encoded).expect("decodes"), msg, "{file}");
    }
}

#[test]
fn golden_fixtures_transform_across_formats_losslessly() {
    let codec = Codec::default();
    let json = EncodedMessage {
        format: WireFormat::Json,
        bytes: golden("nested.json"),
        declared_capability: cap("env.report"),
    };
    let xml = codec.transform(&json, WireFormat::Xml).expect("transforms");
    assert_eq!(xml.bytes, golden("nested.xml"));
    let back = codec.transform(&xml, WireFormat::Json).expect("transforms back");
    assert_eq!(back.bytes, golden("nested.json"));
}
