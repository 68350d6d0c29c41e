//! Replays every transcript in docs/wire-formats.md against a live node,
//! byte for byte. The doc stays honest: when the wire changes, these
//! comparisons break until the transcripts are recaptured.
//!
//! Wall-clock instants are the one run-to-run variable, so every 13-digit
//! integer is substituted with a fixed instant on both sides before the
//! comparison; the substitution preserves length, which keeps
//! content-length headers comparable too.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use trellis_core::config::FrameworkConfig;
use trellis_net::node::Node;
use trellis_net::Protocol;

fn doc() -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/wire-formats.md");
    std::fs::read_to_string(path).unwrap()
}

/// Fenced blocks whose info string is exactly `tag`, in document order.
fn blocks(md: &str, tag: &str) -> Vec<String> {
    let fence = format!("```{tag}");
    let mut out = Vec::new();
    let mut lines = md.lines();
    while let Some(line) = lines.next() {
        if line.trim_end() == fence {
            let mut body = Vec::new();
            for line in lines.by_ref() {
                if line.trim_end() == "```" {
                    break;
                }
                body.push(line.to_string());
            }
            out.push(body.join("\n"));
        }
    }
    out
}

fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut run = String::new();
    let flush = |out: &mut String, run: &str| {
        if run.len() == 13 && run.starts_with('1') {
            out.push_str("1700000000000");
        } else {
            out.push_str(run);
        }
    };
    for c in s.chars() {
        if c.is_ascii_digit() {
            run.push(c);
        } else {
            flush(&mut out, &run);
            run.clear();
            out.push(c);
        }
    }
    flush(&mut out, &run);
    out
}

/// The fixture described in the doc's closing section: one device named
/// `therm`, one token `tok-app`, both wires bound.
fn served() -> (Arc<Node>, SocketAddr, SocketAddr, tempfile::TempDir) {
    let mut config = FrameworkConfig::default();
    config.tokens.insert("tok-app".to_string(), "app".to_string());
    config.probe_interval_ms = 60_000;
    let dir = tempfile::tempdir().unwrap();
    let node = Node::new(config, 7, dir.path()).unwrap();
    node.spawn_device(
        serde_json::from_value(serde_json::json!({
            "device_id": "therm",
            "capabilities": [{
                "capability": "weather.temperature.read",
                "processing_delay_ms": 5,
                "generator": {"kind": "constant", "value": 21.5}
            }]
        }))
        .unwrap(),
    )
    .unwrap();
    node.bind("north", Protocol::RequestWire, "127.0.0.1:0").unwrap();
    node.bind("south", Protocol::PubSubWire, "127.0.0.1:0").unwrap();
    node.start().unwrap();
    let rest = node.bindings()[0].bound_addr().unwrap();
    let bus = node.bindings()[1].bound_addr().unwrap();
    (node, rest, bus, dir)
}

#[test]
fn rest_transcripts_replay_byte_for_byte() {
    let md = doc();
    let requests = blocks(&md, "http-request");
    let responses = blocks(&md, "http-response");
    assert_eq!(requests.len(), responses.len(), "unpaired transcript blocks");
    assert!(!requests.is_empty(), "no request transcripts found");

    let (node, rest, _bus, _dir) = served();
    for (request, want) in requests.iter().zip(&responses) {
        let (head, body) = request.split_once("\n\n").unwrap_or((request.as_str(), ""));
        let bytes = format!("{}\r\n\r\n{body}", head.replace('\n', "\r\n"));
        let mut stream = TcpStream::connect(rest).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        stream.write_all(bytes.as_bytes()).unwrap();
        let mut got = Vec::new();
        stream.read_to_end(&mut got).unwrap();
        let got = String::from_utf8(got).unwrap().replace("\r\n", "\n");
        assert_eq!(
            normalize(&got),
            normalize(want),
            "response drifted from the documented transcript for:\n{request}"
        );
    }
    node.shutdown();
}

#[test]
fn pubsub_transcript_replays_byte_for_byte() {
    let md = doc();
    let sessions = blocks(&md, "pubsub-session");
    assert_eq!(sessions.len(), 1, "expected exactly one pub/sub transcript");

    let (node, _rest, bus, _dir) = served();
    let stream = TcpStream::connect(bus).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    stream.set_nodelay(true).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);

    for line in sessions[0].lines() {
        if let Some(frame) = line.strip_prefix("> ") {
            writer.write_all(frame.as_bytes()).unwrap();
            writer.write_all(b"\n").unwrap();
            writer.flush().unwrap();
        } else if let Some(want) = line.strip_prefix("< ") {
            let mut got = String::new();
            reader.read_line(&mut got).unwrap();
            assert_eq!(
                normalize(got.trim_end()),
                normalize(want),
                "frame drifted from the documented transcript"
            );
        } else {
            panic!("transcript line without a direction prefix: `{line}`");
        }
    }
    node.shutdown();
}
