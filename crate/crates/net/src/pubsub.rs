//! The publish/subscribe wire: newline-delimited JSON frames over TCP.
//!
//! A connection is a sequence of frames, one per line. Inbound ops are
//! `pub`, `sub`, and `ack`; the adapter answers every line with exactly one
//! `ok` or `err` frame and pushes `evt` frames for subscribed deliveries
//! whenever they are due. Nothing a peer sends can silence or drop the
//! connection: a malformed line earns an `err` frame and the session keeps
//! going.
//!
//! A `pub` frame's payload is a full JSON envelope whose embedded
//! capability must equal the frame's topic. That keeps bus traffic
//! self-describing: an event is the same canonical message whether it
//! arrived over this wire or from an in-process publisher.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use trellis_core::bus::Subscription;
use trellis_core::codec::{Codec, EncodedMessage};
use trellis_core::descriptor::WireFormat;
use trellis_core::stack::Stack;
use trellis_core::{Capability, ErrorKind, FrameworkError, Result};

/// One inbound line. Every op uses a subset of these fields; the handler
/// checks that nothing irrelevant was sent.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameIn {
    op: String,
    #[serde(default)]
    topic: Option<String>,
    #[serde(default)]
    pattern: Option<String>,
    #[serde(default)]
    delivery_id: Option<String>,
    #[serde(default)]
    payload: Option<Box<RawValue>>,
}

#[derive(Serialize)]
struct OkFrame<'a> {
    op: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    topic: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pattern: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delivery_id: Option<&'a str>,
}

#[derive(Serialize)]
struct ErrFrame<'a> {
    op: &'static str,
    kind: &'a str,
    detail: &'a str,
}

#[derive(Serialize)]
struct EvtFrame<'a> {
    op: &'static str,
    pattern: &'a str,
    topic: &'a str,
    delivery_id: &'a str,
    attempt: u32,
    payload: &'a RawValue,
}

fn ok_frame(topic: Option<&str>, pattern: Option<&str>, delivery_id: Option<&str>) -> String {
    serde_json::to_string(&OkFrame { op: "ok", topic, pattern, delivery_id })
        .unwrap_or_else(|_| "{\"op\":\"ok\"}".to_string())
}

pub fn err_frame(err: &FrameworkError) -> String {
    serde_json::to_string(&ErrFrame { op: "err", kind: err.kind.as_str(), detail: &err.detail })
        .unwrap_or_else(|_| "{\"op\":\"err\"}".to_string())
}

/// All per-connection state: which patterns this peer subscribed and the
/// live bus subscriptions behind them.
pub struct PubSubSession {
    stack: Arc<Stack>,
    codec: Codec,
    subs: Vec<(String, Subscription)>,
}

impl PubSubSession {
    pub fn new(stack: Arc<Stack>) -> PubSubSession {
        let codec = Codec::from_config(&stack.config);
        PubSubSession { stack, codec, subs: Vec::new() }
    }

    /// One line in, exactly one frame out.
    pub fn handle_line(&mut self, line: &str) -> String {
        match self.dispatch(line) {
            Ok(frame) => frame,
            Err(e) => err_frame(&e),
        }
    }

    fn dispatch(&mut self, line: &str) -> Result<String> {
        let frame: FrameIn = serde_json::from_str(line)
            .map_err(|e| FrameworkError::contract(format!("frame does not parse: {e}")))?;
        match frame.op.as_str() {
            "pub" => {
                let (topic, payload) = match (frame.topic, frame.payload, frame.pattern, frame.delivery_id) {
                    (Some(t), Some(p), None, None) => (t, p),
                    _ => {
                        return Err(FrameworkError::contract(
                            "pub frame needs exactly `topic` and `payload`",
                        ))
                    }
                };
                self.publish(&topic, payload.get())?;
                Ok(ok_frame(Some(&topic), None, None))
            }
            "sub" => {
                let pattern = match (frame.pattern, frame.topic, frame.payload, frame.delivery_id) {
                    (Some(p), None, None, None) => p,
                    _ => {
                        return Err(FrameworkError::contract(
                            "sub frame needs exactly `pattern`",
                        ))
                    }
                };
                let sub = self.stack.bus.subscribe(&pattern)?;
                self.subs.push((pattern.clone(), sub));
                Ok(ok_frame(None, Some(&pattern), None))
            }
            "ack" => {
                let delivery_id = match (frame.delivery_id, frame.topic, frame.pattern, frame.payload) {
                    (Some(d), None, None, None) => d,
                    _ => {
                        return Err(FrameworkError::contract(
                            "ack frame needs exactly `delivery_id`",
                        ))
                    }
                };
                self.ack(&delivery_id)?;
                Ok(ok_frame(None, None, Some(&delivery_id)))
            }
            other => Err(FrameworkError::contract(format!("unknown op `{other}`"))),
        }
    }

    /// Decodes the envelope with the frame's topic as the declared
    /// capability, so a payload whose `cap` disagrees with the topic is
    /// rejected before it reaches the bus.
    fn publish(&self, topic: &str, payload_json: &str) -> Result<()> {
        let declared = Capability::parse(topic).map_err(|e| {
            FrameworkError::contract(format!("topic is not publishable: {}", e.detail))
        })?;
        let message = self.codec.decode(&EncodedMessage {
            format: WireFormat::Json,
            bytes: payload_json.as_bytes().to_vec(),
            declared_capability: declared,
        })?;
        self.stack.bus.publish(topic, message)?;
        Ok(())
    }

    /// A delivery id is only meaningful to the subscription that received
    /// it, so the ack is offered to each of this connection's
    /// subscriptions in turn.
    fn ack(&self, delivery_id: &str) -> Result<()> {
        for (_, sub) in &self.subs {
            if sub.ack(delivery_id).is_ok() {
                return Ok(());
            }
        }
        Err(FrameworkError::new(
            ErrorKind::NotFound,
            format!("no pending delivery `{delivery_id}` on this connection"),
        ))
    }

    /// Due deliveries across all subscriptions, rendered as `evt` frames.
    /// Also how redeliveries surface: an unacked event comes back here
    /// with its attempt count bumped.
    pub fn poll_events(&self) -> Vec<String> {
        let mut frames = Vec::new();
        for (pattern, sub) in &self.subs {
            while let Some(event) = sub.poll() {
                match self.render_event(pattern, &event) {
                    Ok(frame) => frames.push(frame),
                    Err(e) => frames.push(err_frame(&e)),
                }
            }
        }
        frames
    }

    fn render_event(&self, pattern: &str, event: &trellis_core::bus::BusEvent) -> Result<String> {
        let encoded = self.codec.encode(&event.payload, WireFormat::Json)?;
        let payload_json = String::from_utf8(encoded.bytes)
            .map_err(|_| FrameworkError::contract("encoded payload is not utf-8"))?;
        let payload = RawValue::from_string(payload_json)
            .map_err(|e| FrameworkError::contract(format!("payload is not one json value: {e}")))?;
        serde_json::to_string(&EvtFrame {
            op: "evt",
            pattern,
            topic: &event.topic,
            delivery_id: &event.delivery_id,
            attempt: event.attempt,
            payload: &payload,
        })
        .map_err(|e| FrameworkError::contract(format!("evt frame serialization failed: {e}")))
    }
}
