//! The operator subcommands. Every remote command is one or more plain
//! northbound HTTP exchanges, so anything the CLI can do, any HTTP client
//! can do. `scenario run` is self-contained: it hosts the framework
//! in-process for one deterministic run.

use std::time::{Duration, SystemTime, UNIX_EPOCH};

use trellis_core::capability::Capability;
use trellis_core::codec::{Codec, EncodedMessage};
use trellis_core::descriptor::WireFormat;
use trellis_core::message::CanonicalMessage;
use trellis_core::sim::{run_scenario, Scenario};
use trellis_core::value::CanonicalValue;
use trellis_core::FrameworkError;
use trellis_net::HttpClient;

use crate::{EXIT_OK, EXIT_REQUEST, EXIT_USAGE};

/// Request failures exit 1 with the error kind leading the message; local
/// mistakes (unreadable files, unparseable flags) exit 2.
fn request_failed(json: bool, err: &FrameworkError) -> u8 {
    if json {
        let rendered = serde_json::json!({
            "ok": false,
            "kind": err.kind.as_str(),
            "detail": err.detail,
        });
        println!("{rendered}");
    }
    eprintln!("{}: {}", err.kind, err.detail);
    EXIT_REQUEST
}

fn usage_failed(message: &str) -> u8 {
    eprintln!("{message}");
    EXIT_USAGE
}

fn wall_now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn mime_of(format: WireFormat) -> &'static str {
    match format {
        WireFormat::Json => "application/json",
        WireFormat::Xml => "application/xml",
    }
}

pub struct CallParams<'a> {
    pub addr: &'a str,
    pub capability: &'a str,
    pub format: WireFormat,
    pub token: Option<&'a str>,
    pub deadline_ms: Option<u64>,
    pub payload: &'a str,
    pub id: &'a str,
}

pub fn call(params: &CallParams, json: bool) -> u8 {
    let payload: serde_json::Value = match serde_json::from_str(params.payload) {
        Ok(v) => v,
        Err(e) => return usage_failed(&format!("--payload is not JSON: {e}")),
    };
    match call_inner(params, payload) {
        Ok((body, envelope)) => {
            if json {
                let rendered = serde_json::json!({"ok": true, "envelope": envelope});
                println!("{rendered}");
            } else {
                println!("{}", String::from_utf8_lossy(&body).trim_end());
            }
            EXIT_OK
        }
        Err(e) => request_failed(json, &e),
    }
}

/// One gateway request: encode the envelope, post it, decode the answer.
/// Returns the raw response body and the envelope re-rendered as JSON so
/// `--json` output is uniform across wire formats.
fn call_inner(
    params: &CallParams,
    payload: serde_json::Value,
) -> Result<(Vec<u8>, serde_json::Value), FrameworkError> {
    let capability = Capability::parse(params.capability)?;
    let body = CanonicalValue::try_from(&payload)?;
    let message = CanonicalMessage::request(params.id, capability.clone(), wall_now_ms(), body);
    message.validate()?;
    let codec = Codec::default();
    let encoded = codec.encode(&message, params.format)?;

    let mime = mime_of(params.format);
    let mut headers: Vec<(&str, &str)> =
        vec![("content-type", mime), ("accept", mime)];
    if let Some(token) = params.token {
        headers.push(("x-auth-token", token));
    }
    let deadline = params.deadline_ms.map(|ms| ms.to_string());
    if let Some(deadline) = &deadline {
        headers.push(("x-deadline-ms", deadline));
    }

    let client = HttpClient::new(params.addr);
    let target = format!("/svc/{}", params.capability);
    let response = client.post(&target, &headers, encoded.bytes)?;
    if response.status != 200 {
        return Err(trellis_net::recover_error(
            response.status,
            response.header(trellis_net::ERROR_KIND_HEADER),
            &response.body,
        ));
    }
    let decoded = codec.decode(&EncodedMessage {
        format: params.format,
        bytes: response.body.clone(),
        declared_capability: capability,
    })?;
    let envelope: serde_json::Value =
        serde_json::from_slice(&codec.encode(&decoded, WireFormat::Json)?.bytes)
            .map_err(|e| FrameworkError::contract(format!("response re-render failed: {e}")))?;
    Ok((response.body, envelope))
}

pub fn registry_ls(addr: &str, json: bool) -> u8 {
    let result = HttpClient::new(addr)
        .get("/registry")
        .and_then(|resp| check_ok(resp))
        .and_then(|body| {
            serde_json::from_slice::<serde_json::Value>(&body)
                .map_err(|e| FrameworkError::contract(format!("registry listing unreadable: {e}")))
        });
    let listing = match result {
        Ok(v) => v,
        Err(e) => return request_failed(json, &e),
    };
    if json {
        println!("{listing}");
        return EXIT_OK;
    }
    let services = listing["services"].as_array().cloned().unwrap_or_default();
    if services.is_empty() {
        println!("no live services");
    } else {
        println!("services:");
        for s in &services {
            let quarantined = if s["quarantined"].as_bool().unwrap_or(false) {
                "  [quarantined]"
            } else {
                ""
            };
            println!(
                "  {}  {} {} cost={}ms epoch={}{}",
                s["service_id"].as_str().unwrap_or("?"),
                s["granularity"].as_str().unwrap_or("?"),
                s["preferred_format"].as_str().unwrap_or("?"),
                s["cost_hint_ms"],
                s["epoch"],
                quarantined,
            );
        }
    }
    let composites = listing["composites"].as_array().cloned().unwrap_or_default();
    if !composites.is_empty() {
        println!("composites:");
        for c in &composites {
            let members: Vec<&str> = c["members"]
                .as_array()
                .map(|m| m.iter().filter_map(|v| v.as_str()).collect())
                .unwrap_or_default();
            println!(
                "  {} = {} ({})",
                c["capability"].as_str().unwrap_or("?"),
                members.join(" + "),
                c["mode"].as_str().unwrap_or("?"),
            );
        }
    }
    EXIT_OK
}

fn check_ok(resp: trellis_net::http::Response) -> Result<Vec<u8>, FrameworkError> {
    if resp.status == 200 {
        Ok(resp.body)
    } else {
        Err(trellis_net::recover_error(
            resp.status,
            resp.header(trellis_net::ERROR_KIND_HEADER),
            &resp.body,
        ))
    }
}

/// Registers the JSON document at `path` against an operator route
/// (`/compose` or `/split`). The server does the semantic validation; the
/// CLI only checks the file is readable JSON.
pub fn register_file(addr: &str, path: &std::path::Path, route: &str, json: bool) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return usage_failed(&format!("cannot read `{}`: {e}", path.display())),
    };
    if let Err(e) = serde_json::from_str::<serde_json::Value>(&text) {
        return usage_failed(&format!("`{}` is not JSON: {e}", path.display()));
    }
    let result = HttpClient::new(addr)
        .post(route, &[("content-type", "application/json")], text.into_bytes())
        .and_then(check_ok);
    match result {
        Ok(body) => {
            let body = String::from_utf8_lossy(&body);
            if json {
                println!("{body}");
            } else {
                let parsed: serde_json::Value = serde_json::from_str(&body).unwrap_or_default();
                match parsed["registered"].as_str() {
                    Some(name) => println!("registered {name}"),
                    None => println!("{body}"),
                }
            }
            EXIT_OK
        }
        Err(e) => request_failed(json, &e),
    }
}

/// One page per poll; `--follow` keeps polling forever. Records print one
/// per line: JSON objects in `--json` mode, summaries otherwise.
pub fn audit_tail(addr: &str, mut after: u64, follow: bool, json: bool) -> u8 {
    let client = HttpClient::new(addr);
    loop {
        let result = client
            .get(&format!("/audit?after={after}&limit=256"))
            .and_then(check_ok)
            .and_then(|body| {
                serde_json::from_slice::<Vec<serde_json::Value>>(&body).map_err(|e| {
                    FrameworkError::contract(format!("audit page unreadable: {e}"))
                })
            });
        let records = match result {
            Ok(r) => r,
            Err(e) => return request_failed(json, &e),
        };
        for record in &records {
            if let Some(seq) = record["seq"].as_u64() {
                after = after.max(seq);
            }
            if json {
                println!("{record}");
            } else {
                println!(
                    "#{:06} {:<18} {:>6}ms consumer={} hops={}",
                    record["seq"].as_u64().unwrap_or(0),
                    record["final_outcome"].as_str().unwrap_or("?"),
                    record["total_ms"].as_u64().unwrap_or(0),
                    record["consumer_id"].as_str().unwrap_or("?"),
                    record["hops"].as_array().map(Vec::len).unwrap_or(0),
                );
            }
        }
        if !follow {
            return EXIT_OK;
        }
        std::thread::sleep(Duration::from_millis(300));
    }
}

/// Loads, runs, and reports one scenario. The process exits 0 only when
/// every assertion in the file passed and no transaction went missing.
pub fn scenario_run(path: &std::path::Path, seed: Option<u64>, json: bool) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return usage_failed(&format!("cannot read `{}`: {e}", path.display())),
    };
    let scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => return usage_failed(&format!("`{}`: {}", path.display(), e.detail)),
    };
    let scenario = match seed {
        Some(seed) => scenario.with_seed(seed),
        None => scenario,
    };
    let report = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => return usage_failed(&format!("`{}`: {}", path.display(), e.detail)),
    };
    if json {
        print!("{}", report.to_json());
    } else {
        println!("seed {}, horizon {}ms, {} requests", report.seed, report.horizon_ms, report.requests.len());
        let totals: Vec<String> =
            report.outcome_totals.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("outcomes: {}", if totals.is_empty() { "none".to_string() } else { totals.join(" ") });
        println!("audit records: {} (conserved: {})", report.audit.records, report.conserved);
        for a in &report.assertions {
            println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.description, a.detail);
        }
        println!("verdict: {}", if report.passed() { "PASS" } else { "FAIL" });
    }
    if report.passed() {
        EXIT_OK
    } else {
        eprintln!("scenario failed its assertions");
        EXIT_REQUEST
    }
}
