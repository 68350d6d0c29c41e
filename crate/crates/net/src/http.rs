//! A deliberately small HTTP/1.1 reader and writer.
//!
//! The northbound wire needs exactly this much HTTP: GET and POST, a
//! handful of lowercase headers, `content-length` bodies, one
//! request/response exchange per connection. Chunked encoding, pipelining,
//! and multi-line headers are rejected rather than half-supported, so the
//! framing that is accepted can be documented bit for bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use trellis_core::{FrameworkError, Result};

use crate::status::reason_phrase;

/// Upper bound on any single header line, and on the request line.
const MAX_LINE_BYTES: usize = 8 * 1024;
const MAX_HEADERS: usize = 64;
/// Bodies above this are refused before buffering. The codec enforces its
/// own (smaller, configurable) ceiling on top.
pub const MAX_BODY_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: String,
    /// Path plus optional query string, exactly as sent.
    pub target: String,
    /// Header names are lowercased on read; values keep their bytes.
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn new(method: &str, target: &str) -> Request {
        Request {
            method: method.to_string(),
            target: target.to_string(),
            headers: BTreeMap::new(),
            body: Vec::new(),
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).map(String::as_str)
    }

    /// Path without the query string.
    pub fn path(&self) -> &str {
        self.target.split('?').next().unwrap_or(&self.target)
    }

    /// Query parameters in order of appearance. No percent-decoding: every
    /// value this wire carries (capability names, sequence numbers) is
    /// plain ASCII already.
    pub fn query(&self) -> Vec<(String, String)> {
        let Some((_, query)) = self.target.split_once('?') else {
            return Vec::new();
        };
        query
            .split('&')
            .filter(|pair| !pair.is_empty())
            .map(|pair| match pair.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => (pair.to_string(), String::new()),
            })
            .collect()
    }

    pub fn query_param(&self, name: &str) -> Option<String> {
        self.query().into_iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    /// Written in insertion order, so response framing is reproducible.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn new(status: u16) -> Response {
        Response { status, headers: Vec::new(), body: Vec::new() }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Response {
        self.headers.push((name.to_string(), value.into()));
        self
    }

    pub fn with_body(mut self, content_type: &str, body: Vec<u8>) -> Response {
        self.headers.push(("content-type".to_string(), content_type.to_string()));
        self.body = body;
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn read_line(reader: &mut impl BufRead) -> Result<Option<String>> {
    let mut buf = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match reader.read(&mut byte) {
            Ok(0) => {
                if buf.is_empty() {
                    return Ok(None);
                }
                return Err(FrameworkError::contract("connection closed mid-line"));
            }
            Ok(_) => {
                if byte[0] == b'\n' {
                    if buf.last() == Some(&b'\r') {
                        buf.pop();
                    }
                    let line = String::from_utf8(buf)
                        .map_err(|_| FrameworkError::contract("header line is not utf-8"))?;
                    return Ok(Some(line));
                }
                buf.push(byte[0]);
                if buf.len() > MAX_LINE_BYTES {
                    return Err(FrameworkError::contract("header line too long"));
                }
            }
            Err(e) => return Err(FrameworkError::crash(format!("read failed: {e}"))),
        }
    }
}

fn read_headers(reader: &mut impl BufRead) -> Result<BTreeMap<String, String>> {
    let mut headers = BTreeMap::new();
    loop {
        let line = read_line(reader)?
            .ok_or_else(|| FrameworkError::contract("connection closed before headers ended"))?;
        if line.is_empty() {
            return Ok(headers);
        }
        if headers.len() >= MAX_HEADERS {
            return Err(FrameworkError::contract("too many headers"));
        }
        let (name, value) = line
            .split_once(':')
            .ok_or_else(|| FrameworkError::contract(format!("malformed header line `{line}`")))?;
        headers.insert(name.trim().to_ascii_lowercase(), value.trim().to_string());
    }
}

fn read_body(reader: &mut impl BufRead, headers: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    if headers.contains_key("transfer-encoding") {
        return Err(FrameworkError::contract("chunked transfer encoding is not supported"));
    }
    let length: usize = match headers.get("content-length") {
        None => return Ok(Vec::new()),
        Some(raw) => raw
            .parse()
            .map_err(|_| FrameworkError::contract(format!("bad content-length `{raw}`")))?,
    };
    if length > MAX_BODY_BYTES {
        return Err(FrameworkError::contract(format!(
            "body of {length} bytes exceeds the {MAX_BODY_BYTES} byte limit"
        )));
    }
    let mut body = vec![0u8; length];
    reader
        .read_exact(&mut body)
        .map_err(|e| FrameworkError::contract(format!("body shorter than content-length: {e}")))?;
    Ok(body)
}

/// Reads one request. `Ok(None)` means the peer closed before sending
/// anything, which is a normal end of connection, not an error.
pub fn read_request(reader: &mut impl BufRead) -> Result<Option<Request>> {
    let Some(line) = read_line(reader)? else {
        return Ok(None);
    };
    let mut parts = line.split(' ');
    let (method, target, version) = match (parts.next(), parts.next(), parts.next(), parts.next())
    {
        (Some(m), Some(t), Some(v), None) if !m.is_empty() && !t.is_empty() => (m, t, v),
        _ => {
            return Err(FrameworkError::contract(format!("malformed request line `{line}`")));
        }
    };
    if version != "HTTP/1.1" {
        return Err(FrameworkError::contract(format!("unsupported version `{version}`")));
    }
    if method != "GET" && method != "POST" {
        return Err(FrameworkError::contract(format!("unsupported method `{method}`")));
    }
    let headers = read_headers(reader)?;
    let body = read_body(reader, &headers)?;
    Ok(Some(Request { method: method.to_string(), target: target.to_string(), headers, body }))
}

/// Reads one response, for the client side.
pub fn read_response(reader: &mut impl BufRead) -> Result<Response> {
    let line = read_line(reader)?
        .ok_or_else(|| FrameworkError::crash("connection closed before a status line"))?;
    let mut parts = line.splitn(3, ' ');
    let version = parts.next().unwrap_or_default();
    let status: u16 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FrameworkError::contract(format!("malformed status line `{line}`")))?;
    if version != "HTTP/1.1" {
        return Err(FrameworkError::contract(format!("unsupported version `{version}`")));
    }
    let headers = read_headers(reader)?;
    let body = read_body(reader, &headers)?;
    let headers = headers.into_iter().collect();
    Ok(Response { status, headers, body })
}

pub fn write_request(writer: &mut impl Write, req: &Request) -> Result<()> {
    let mut out = Vec::with_capacity(256 + req.body.len());
    out.extend_from_slice(format!("{} {} HTTP/1.1\r\n", req.method, req.target).as_bytes());
    for (name, value) in &req.headers {
        out.extend_from_slice(format!("{name}: {value}\r\n").as_bytes());
    }
    out.extend_from_slice(format!("content-length: {}\r\n", req.body.len()).as_bytes());
    out.extend_from_slice(b"connection: close\r\n\r\n");
    out.extend_from_slice(&req.body);
    writer
        .write_all(&out)
        .and_then(|()| writer.flush())
        .map_err(|e| FrameworkError::crash(format!("write failed: {e}")))
}

pub fn write_response(writer: &mut impl Write, resp: &Response) -> Result<()> {
    let mut out = Vec::with_capacity(256 + resp.body.len());
    out.extend_from_slice(
        format!("HTTP/1.1 {} {}\r\n", resp.status, reason_phrase(resp.status)).as_bytes(),
    );
    for (name, value) in &resp.headers {
        out.extend_from_slice(format!("{name}: {value}\r\n").as_bytes());
    }
    out.extend_from_slice(format!("content-length: {}\r\n", resp.body.len()).as_bytes());
    out.extend_from_slice(b"connection: close\r\n\r\n");
    out.extend_from_slice(&resp.body);
    writer
        .write_all(&out)
        .and_then(|()| writer.flush())
        .map_err(|e| FrameworkError::crash(format!("write failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;
    use trellis_core::ErrorKind;

    fn parse(bytes: &[u8]) -> Result<Option<Request>> {
        read_request(&mut BufReader::new(bytes))
    }

    #[test]
    fn a_post_with_body_round_trips_through_write_and_read() {
        let mut req = Request::new("POST", "/svc/weather.temperature.read?x=1");
        req.headers.insert("content-type".to_string(), "application/json".to_string());
        req.headers.insert("x-auth-token".to_string(), "tok".to_string());
        req.body = b"{\"k\":1}".to_vec();

        let mut wire = Vec::new();
        write_request(&mut wire, &req).unwrap();
        let parsed = parse(&wire).unwrap().unwrap();
        assert_eq!(parsed.method, "POST");
        assert_eq!(parsed.path(), "/svc/weather.temperature.read");
        assert_eq!(parsed.query_param("x").as_deref(), Some("1"));
        assert_eq!(parsed.header("x-auth-token"), Some("tok"));
        assert_eq!(parsed.body, req.body);
    }

    #[test]
    fn header_names_are_case_insensitive_on_read() {
        let wire = b"GET /registry HTTP/1.1\r\nX-Auth-Token: tok\r\nAccept: application/xml\r\n\r\n";
        let req = parse(wire).unwrap().unwrap();
        assert_eq!(req.header("x-auth-token"), Some("tok"));
        assert_eq!(req.header("accept"), Some("application/xml"));
    }

    #[test]
    fn eof_before_any_bytes_is_a_clean_close() {
        assert_eq!(parse(b"").unwrap(), None);
    }

    #[test]
    fn the_rejected_shapes_are_contract_violations() {
        let cases: &[&[u8]] = &[
            b"BREW /pot HTTP/1.1\r\n\r\n",
            b"GET /x HTTP/1.0\r\n\r\n",
            b"GET /x HTTP/1.1 extra\r\n\r\n",
            b"GET /x HTTP/1.1\r\nno-colon-here\r\n\r\n",
            b"POST /x HTTP/1.1\r\ntransfer-encoding: chunked\r\n\r\n",
            b"POST /x HTTP/1.1\r\ncontent-length: nine\r\n\r\n",
            b"POST /x HTTP/1.1\r\ncontent-length: 10\r\n\r\nshort",
            b"GET /x HTTP/1.1\r\n",
        ];
        for case in cases {
            let err = parse(case).unwrap_err();
            assert_eq!(err.kind, ErrorKind::ContractViolation, "{:?}", case);
        }
    }

    #[test]
    fn oversized_declared_bodies_are_refused_without_buffering() {
        let wire = format!("POST /x HTTP/1.1\r\ncontent-length: {}\r\n\r\n", MAX_BODY_BYTES + 1);
        let err = parse(wire.as_bytes()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::ContractViolation);
    }

    #[test]
    fn responses_round_trip_and_keep_header_order() {
        let resp = Response::new(200)
            .with_body("application/json", b"{}".to_vec())
            .with_header("x-error-kind", "NotFound");
        let mut wire = Vec::new();
        write_response(&mut wire, &resp).unwrap();
        let text = String::from_utf8(wire.clone()).unwrap();
        assert!(text.starts_with("HTTP/1.1 200 OK\r\ncontent-type: application/json\r\n"));
        assert!(text.ends_with("connection: close\r\n\r\n{}"));

        let parsed = read_response(&mut BufReader::new(wire.as_slice())).unwrap();
        assert_eq!(parsed.status, 200);
        assert_eq!(parsed.header("content-type"), Some("application/json"));
        assert_eq!(parsed.body, b"{}");
    }

    #[test]
    fn query_parsing_handles_empty_and_flag_parameters() {
        let req = Request::new("GET", "/audit?after=7&follow&x=");
        let q = req.query();
        assert_eq!(q[0], ("after".to_string(), "7".to_string()));
        assert_eq!(q[1], ("follow".to_string(), String::new()));
        assert_eq!(q[2], ("x".to_string(), String::new()));
        assert_eq!(Request::new("GET", "/audit").query(), Vec::new());
    }
}
