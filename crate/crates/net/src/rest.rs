//! Routing for the request/response wire.
//!
//! `POST /svc/<capability>` is the consumer front door: body and headers
//! become a [`ConsumerContract`] plus an [`EncodedMessage`], the gateway
//! does the rest, and the response comes back in whatever format the
//! `accept` header asked for. Everything else on this wire is operator
//! surface (registry, health, audit, composite and split registration) and
//! speaks plain JSON.
//!
//! Consumer identity comes from the token table, not from a header: the
//! token is resolved to the consumer it was issued to before the contract
//! is built. Requests with unknown tokens still go through the gateway
//! under a placeholder identity so the rejection is audited like any other
//! transaction.

use std::sync::Arc;

use serde::Serialize;
use trellis_core::codec::EncodedMessage;
use trellis_core::descriptor::WireFormat;
use trellis_core::gateway::{ConsumerContract, SplitMapping};
use trellis_core::composite::CompositeSpec;
use trellis_core::stack::Stack;
use trellis_core::{Capability, FrameworkError, Result};

use crate::http::{Request, Response};
use crate::status::{status_of, ERROR_KIND_HEADER};

pub const JSON_MIME: &str = "application/json";
pub const XML_MIME: &str = "application/xml";

/// Hard ceiling on one audit page; `limit` above this is clamped.
const MAX_AUDIT_PAGE: usize = 1024;
const DEFAULT_AUDIT_PAGE: usize = 256;

pub fn mime_of(format: WireFormat) -> &'static str {
    match format {
        WireFormat::Json => JSON_MIME,
        WireFormat::Xml => XML_MIME,
    }
}

pub fn format_of(mime: &str) -> Result<WireFormat> {
    // Parameters like `; charset=utf-8` are tolerated and ignored.
    match mime.split(';').next().unwrap_or_default().trim() {
        JSON_MIME => Ok(WireFormat::Json),
        XML_MIME => Ok(WireFormat::Xml),
        other => Err(FrameworkError::contract(format!("unsupported media type `{other}`"))),
    }
}

pub struct RestAdapter {
    stack: Arc<Stack>,
}

#[derive(Serialize)]
struct RegistryListing<T, U> {
    services: T,
    composites: U,
}

#[derive(Serialize)]
struct Registered<'a> {
    registered: &'a str,
}

impl RestAdapter {
    pub fn new(stack: Arc<Stack>) -> RestAdapter {
        RestAdapter { stack }
    }

    /// Maps one request to one response. Never panics, never hangs: every
    /// outcome is a response with a status from the error table.
    pub fn handle(&self, req: &Request) -> Response {
        let result = match (req.method.as_str(), req.path()) {
            ("POST", path) if path.starts_with("/svc/") => {
                return self.serve_capability(req, &path["/svc/".len()..]);
            }
            ("GET", "/registry") => self.registry_listing(),
            ("GET", "/health") => json_ok(&self.stack.monitor.all_health()),
            ("GET", path) if path.starts_with("/health/") => {
                self.health_of(&path["/health/".len()..])
            }
            ("GET", "/audit") => self.audit_page(req),
            ("GET", "/audit/stats") => self.audit_stats(req),
            ("POST", "/compose") => self.compose(&req.body),
            ("POST", "/split") => self.split(&req.body),
            _ => Err(FrameworkError::not_found(format!(
                "no route for {} {}",
                req.method,
                req.path()
            ))),
        };
        result.unwrap_or_else(|e| error_response(&e))
    }

    /// The consumer path: contract from headers, payload from the body,
    /// one gateway transaction.
    fn serve_capability(&self, req: &Request, capability_raw: &str) -> Response {
        let attempt = (|| -> Result<EncodedMessage> {
            let capability = Capability::parse(capability_raw)?;
            let wire_format = match req.header("content-type") {
                Some(mime) => format_of(mime)?,
                None => WireFormat::Json,
            };
            let accepted_format = match req.header("accept") {
                Some(mime) => format_of(mime)?,
                None => wire_format,
            };
            let deadline_ms = match req.header("x-deadline-ms") {
                Some(raw) => raw.parse().map_err(|_| {
                    FrameworkError::contract(format!("bad x-deadline-ms value `{raw}`"))
                })?,
                None => self.stack.config.default_deadline_ms,
            };
            let auth_token = req.header("x-auth-token").unwrap_or_default().to_string();
            let consumer_id = self
                .stack
                .gateway
                .authenticate(&auth_token)
                .unwrap_or_else(|_| "anonymous".to_string());

            let contract = ConsumerContract {
                consumer_id,
                capability: capability.clone(),
                accepted_format,
                deadline_ms,
                auth_token,
            };
            let payload = EncodedMessage {
                format: wire_format,
                bytes: req.body.clone(),
                declared_capability: capability,
            };
            self.stack.gateway.handle_request(&contract, &payload)
        })();

        match attempt {
            Ok(encoded) => {
                Response::new(200).with_body(mime_of(encoded.format), encoded.bytes)
            }
            Err(e) => error_response(&e),
        }
    }

    fn registry_listing(&self) -> Result<Response> {
        json_ok(&RegistryListing {
            services: self.stack.registry.entries(),
            composites: self.stack.registry.composites(),
        })
    }

    fn health_of(&self, service_id: &str) -> Result<Response> {
        self.stack
            .monitor
            .health(service_id)
            .ok_or_else(|| {
                FrameworkError::not_found(format!("no health record for `{service_id}`"))
            })
            .and_then(|state| json_ok(&state))
    }

    fn audit_page(&self, req: &Request) -> Result<Response> {
        let after = parse_param(req, "after")?.unwrap_or(0u64);
        let limit = parse_param(req, "limit")?
            .map(|n: usize| n.min(MAX_AUDIT_PAGE))
            .unwrap_or(DEFAULT_AUDIT_PAGE);
        let mut records = self.stack.auditor.records_after(after);
        records.truncate(limit);
        json_ok(&records)
    }

    fn audit_stats(&self, req: &Request) -> Result<Response> {
        let raw = req.query_param("capability").ok_or_else(|| {
            FrameworkError::contract("audit stats needs a `capability` query parameter")
        })?;
        let capability = Capability::parse(&raw)?;
        json_ok(&self.stack.auditor.stats(&capability, None))
    }

    fn compose(&self, body: &[u8]) -> Result<Response> {
        let spec: CompositeSpec = parse_json(body)?;
        let name = spec.composite_capability.to_string();
        self.stack.registry.put_composite(spec)?;
        json_ok(&Registered { registered: &name })
    }

    fn split(&self, body: &[u8]) -> Result<Response> {
        let mapping: SplitMapping = parse_json(body)?;
        let name = mapping.coarse.to_string();
        self.stack.gateway.register_split(mapping)?;
        json_ok(&Registered { registered: &name })
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body)
        .map_err(|e| FrameworkError::contract(format!("body does not parse: {e}")))
}

fn parse_param<T: std::str::FromStr>(req: &Request, name: &str) -> Result<Option<T>> {
    match req.query_param(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| FrameworkError::contract(format!("bad `{name}` value `{raw}`"))),
    }
}

fn json_ok<T: Serialize>(value: &T) -> Result<Response> {
    let body = serde_json::to_vec(value)
        .map_err(|e| FrameworkError::contract(format!("response serialization failed: {e}")))?;
    Ok(Response::new(200).with_body(JSON_MIME, body))
}

/// Every error becomes the same three-part shape: mapped status, the exact
/// kind in a header, and the serialized error as the JSON body.
pub fn error_response(err: &FrameworkError) -> Response {
    let body = serde_json::to_vec(err).unwrap_or_else(|_| b"{}".to_vec());
    Response::new(status_of(err.kind))
        .with_header(ERROR_KIND_HEADER, err.kind.as_str())
        .with_body(JSON_MIME, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trellis_core::clock::VirtualClock;
    use trellis_core::codec::Codec;
    use trellis_core::config::FrameworkConfig;
    use trellis_core::message::CanonicalMessage;
    use trellis_core::sim::Fleet;
    use trellis_core::value::CanonicalValue;

    struct Rig {
        adapter: RestAdapter,
        stack: Arc<Stack>,
        _dir: tempfile::TempDir,
    }

    /// A virtual-clock stack with one simulated thermometer. Requests pass
    /// through the same adapter code the socket wire uses.
    fn rig() -> Rig {
        let mut config = FrameworkConfig::default();
        config.tokens.insert("tok-app".to_string(), "app".to_string());
        let clock = VirtualClock::new(0);
        let fleet = Fleet::new(0, false);
        let dir = tempfile::tempdir().unwrap();
        let stack =
            Arc::new(Stack::new(clock, fleet.clone(), dir.path(), config).unwrap());
        let profile: trellis_core::sim::DeviceProfile = serde_json::from_value(serde_json::json!({
            "device_id": "therm-1",
            "capabilities": [
                {
                    "capability": "weather.temperature.read",
                    "processing_delay_ms": 40,
                    "generator": {"kind": "constant", "value": 21.5}
                },
                {
                    "capability": "weather.humidity.read",
                    "processing_delay_ms": 25,
                    "generator": {"kind": "constant", "value": 58.0}
                }
            ],
            "domain": "home",
            "wire": {"kind": "request"},
            "format": "json"
        }))
        .unwrap();
        fleet.spawn_device(profile, &stack.registry).unwrap();
        Rig { adapter: RestAdapter::new(stack.clone()), stack, _dir: dir }
    }

    fn call_request(capability: &str, token: &str, accept: &str) -> Request {
        let msg = CanonicalMessage::request(
            "m-1",
            Capability::parse(capability).unwrap(),
            0,
            CanonicalValue::Null,
        );
        let body = Codec::default().encode(&msg, WireFormat::Json).unwrap().bytes;
        let mut req = Request::new("POST", &format!("/svc/{capability}"));
        req.headers.insert("content-type".to_string(), JSON_MIME.to_string());
        req.headers.insert("accept".to_string(), accept.to_string());
        req.headers.insert("x-auth-token".to_string(), token.to_string());
        req.body = body;
        req
    }

    #[test]
    fn a_json_request_can_ask_for_an_xml_answer() {
        let rig = rig();
        let resp =
            rig.adapter.handle(&call_request("weather.temperature.read", "tok-app", XML_MIME));
        assert_eq!(resp.status, 200);
        assert_eq!(resp.header("content-type"), Some(XML_MIME));
        let decoded = Codec::default()
            .decode(&EncodedMessage {
                format: WireFormat::Xml,
                bytes: resp.body.clone(),
                declared_capability: Capability::parse("weather.temperature.read").unwrap(),
            })
            .unwrap();
        assert_eq!(decoded.correlation_id.as_deref(), Some("m-1"));
    }

    #[test]
    fn the_error_statuses_come_from_the_mapping_table() {
        let rig = rig();

        let resp = rig.adapter.handle(&call_request("weather.temperature.read", "bad", JSON_MIME));
        assert_eq!(resp.status, 401);
        assert_eq!(resp.header(ERROR_KIND_HEADER), Some("UnauthorisedAccess"));

        let resp = rig.adapter.handle(&call_request("no.such.cap", "tok-app", JSON_MIME));
        assert_eq!(resp.status, 404);
        assert_eq!(resp.header(ERROR_KIND_HEADER), Some("NotFound"));

        let mut garbled = call_request("weather.temperature.read", "tok-app", JSON_MIME);
        garbled.body = b"not a message".to_vec();
        let resp = rig.adapter.handle(&garbled);
        assert_eq!(resp.status, 422);
        assert_eq!(resp.header(ERROR_KIND_HEADER), Some("ContractViolation"));

        // All three rejections were audited.
        assert_eq!(rig.stack.auditor.record_count(), 3);
    }

    #[test]
    fn capability_paths_that_do_not_parse_are_422_not_404() {
        let rig = rig();
        let mut req = Request::new("POST", "/svc/Not..A..Capability");
        req.headers.insert("x-auth-token".to_string(), "tok-app".to_string());
        let resp = rig.adapter.handle(&req);
        assert_eq!(resp.status, 422);
    }

    #[test]
    fn unknown_routes_are_not_found() {
        let rig = rig();
        assert_eq!(rig.adapter.handle(&Request::new("GET", "/nope")).status, 404);
        assert_eq!(rig.adapter.handle(&Request::new("POST", "/registry")).status, 404);
    }

    #[test]
    fn deadline_header_must_be_numeric() {
        let rig = rig();
        let mut req = call_request("weather.temperature.read", "tok-app", JSON_MIME);
        req.headers.insert("x-deadline-ms".to_string(), "soon".to_string());
        assert_eq!(rig.adapter.handle(&req).status, 422);
    }

    #[test]
    fn operator_routes_serve_registry_health_and_audit() {
        let rig = rig();
        rig.adapter.handle(&call_request("weather.temperature.read", "tok-app", JSON_MIME));

        let listing = rig.adapter.handle(&Request::new("GET", "/registry"));
        assert_eq!(listing.status, 200);
        let parsed: serde_json::Value = serde_json::from_slice(&listing.body).unwrap();
        let ids: Vec<&str> = parsed["services"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["service_id"].as_str().unwrap())
            .collect();
        assert_eq!(
            ids,
            ["therm-1/weather.humidity.read", "therm-1/weather.temperature.read"]
        );

        // Health records exist once the monitor has probed.
        rig.stack.tick();
        let health = rig
            .adapter
            .handle(&Request::new("GET", "/health/therm-1/weather.temperature.read"));
        assert_eq!(health.status, 200);
        assert_eq!(
            rig.adapter.handle(&Request::new("GET", "/health/ghost")).status,
            404
        );

        let audit = rig.adapter.handle(&Request::new("GET", "/audit?after=0&limit=10"));
        let records: serde_json::Value = serde_json::from_slice(&audit.body).unwrap();
        assert_eq!(records.as_array().unwrap().len(), 1);

        let stats = rig
            .adapter
            .handle(&Request::new("GET", "/audit/stats?capability=weather.temperature.read"));
        let parsed: serde_json::Value = serde_json::from_slice(&stats.body).unwrap();
        assert_eq!(parsed["count"], 1);
        assert_eq!(rig.adapter.handle(&Request::new("GET", "/audit/stats")).status, 422);
    }

    #[test]
    fn compose_and_split_register_through_their_routes() {
        let rig = rig();
        let mut req = Request::new("POST", "/compose");
        req.body = serde_json::json!({
            "capability": "weather.report",
            "members": ["weather.temperature.read", "weather.humidity.read"],
            "merge": [
                {"member": 0, "from": "value", "to": "temperature_c"},
                {"member": 1, "from": "value", "to": "humidity_pct"}
            ],
            "mode": "parallel"
        })
        .to_string()
        .into_bytes();
        let resp = rig.adapter.handle(&req);
        assert_eq!(resp.status, 200, "{}", String::from_utf8_lossy(&resp.body));
        assert_eq!(rig.stack.registry.composites().len(), 1);

        let mut req = Request::new("POST", "/split");
        req.body = serde_json::json!({
            "coarse": "weather.bundle",
            "fines": ["weather.temperature.read", "weather.humidity.read"],
            "merge": [
                {"member": 0, "from": "value", "to": "temperature_c"},
                {"member": 1, "from": "value", "to": "humidity_pct"}
            ]
        })
        .to_string()
        .into_bytes();
        assert_eq!(rig.adapter.handle(&req).status, 200);

        // Malformed registration bodies are contract violations.
        let mut req = Request::new("POST", "/compose");
        req.body = b"{\"nope\":1}".to_vec();
        assert_eq!(rig.adapter.handle(&req).status, 422);
    }
}
