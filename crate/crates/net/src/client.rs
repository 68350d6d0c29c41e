//! Blocking HTTP client for the northbound wire.
//!
//! One connection per exchange, mirroring the server's close-after-response
//! framing. The CLI and the integration tests both go through here, so the
//! public API is exercised exactly the way an external consumer would.

use std::io::BufReader;
use std::net::TcpStream;
use std::time::Duration;

use trellis_core::{FrameworkError, Result};

use crate::http::{read_response, write_request, Request, Response};
use crate::status::{recover_error, ERROR_KIND_HEADER};

pub struct HttpClient {
    addr: String,
    timeout: Duration,
}

impl HttpClient {
    pub fn new(addr: impl Into<String>) -> HttpClient {
        HttpClient { addr: addr.into(), timeout: Duration::from_secs(30) }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> HttpClient {
        self.timeout = timeout;
        self
    }

    pub fn send(&self, req: &Request) -> Result<Response> {
        let stream = TcpStream::connect(&self.addr)
            .map_err(|e| FrameworkError::crash(format!("connect {}: {e}", self.addr)))?;
        stream.set_read_timeout(Some(self.timeout)).ok();
        stream.set_write_timeout(Some(self.timeout)).ok();
        let mut writer = stream
            .try_clone()
            .map_err(|e| FrameworkError::crash(format!("clone stream: {e}")))?;
        write_request(&mut writer, req)?;
        read_response(&mut BufReader::new(stream))
    }

    pub fn get(&self, target: &str) -> Result<Response> {
        self.send(&Request::new("GET", target))
    }

    pub fn post(&self, target: &str, headers: &[(&str, &str)], body: Vec<u8>) -> Result<Response> {
        let mut req = Request::new("POST", target);
        for (name, value) in headers {
            req.headers.insert(name.to_string(), value.to_string());
        }
        req.body = body;
        self.send(&req)
    }

    /// Like [`send`](Self::send), but a non-200 status becomes the
    /// [`FrameworkError`] the response encodes.
    pub fn expect_ok(&self, req: &Request) -> Result<Response> {
        let resp = self.send(req)?;
        if resp.status == 200 {
            return Ok(resp);
        }
        Err(recover_error(resp.status, resp.header(ERROR_KIND_HEADER), &resp.body))
    }
}
