//! Socket bindings: the lifecycle around the two wire protocols.
//!
//! A binding owns one listening endpoint and one protocol. Starting is
//! idempotent; stopping drains whatever is in flight, bounded by the
//! contract deadline, before the binding reports itself stopped. Each wire
//! protocol is implemented exactly once (the REST framing in [`rest`] and
//! [`http`], the pub/sub framing in [`pubsub`]); a binding only decides
//! which of the two a given socket speaks.
//!
//! [`rest`]: crate::rest
//! [`http`]: crate::http
//! [`pubsub`]: crate::pubsub

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use trellis_core::stack::Stack;
use trellis_core::{ErrorKind, FrameworkError, Result};

use crate::http::{read_request, write_response};
use crate::pubsub::{err_frame, PubSubSession};
use crate::rest::{error_response, RestAdapter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    PubSubWire,
    RequestWire,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::PubSubWire => "PubSubWire",
            Protocol::RequestWire => "RequestWire",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifecycleState {
    Stopped,
    Running,
}

/// Simultaneous REST requests a binding will hold; more earn a 503 so the
/// peer backs off instead of queueing unboundedly.
const MAX_IN_FLIGHT: usize = 64;
/// How long a quiet connection may sit before its thread gives up on it.
const IDLE_READ_TIMEOUT: Duration = Duration::from_secs(10);
/// Poll cadence for pub/sub sessions between inbound lines.
const EVENT_POLL_INTERVAL: Duration = Duration::from_millis(25);

struct Running {
    local_addr: SocketAddr,
    accept: JoinHandle<()>,
    shutdown: Arc<AtomicBool>,
    in_flight: Arc<AtomicUsize>,
    conns: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

pub struct Binding {
    pub binding_id: String,
    pub protocol: Protocol,
    pub endpoint: String,
    stack: Arc<Stack>,
    running: Mutex<Option<Running>>,
}

impl Binding {
    pub fn new(
        binding_id: impl Into<String>,
        protocol: Protocol,
        endpoint: impl Into<String>,
        stack: Arc<Stack>,
    ) -> Arc<Binding> {
        Arc::new(Binding {
            binding_id: binding_id.into(),
            protocol,
            endpoint: endpoint.into(),
            stack,
            running: Mutex::new(None),
        })
    }

    pub fn state(&self) -> LifecycleState {
        match self.running.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
            Some(_) => LifecycleState::Running,
            None => LifecycleState::Stopped,
        }
    }

    /// The address actually bound, which differs from `endpoint` when the
    /// endpoint asked for port 0.
    pub fn bound_addr(&self) -> Option<SocketAddr> {
        self.running
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_ref()
            .map(|r| r.local_addr)
    }

    pub fn start(self: &Arc<Self>) -> Result<LifecycleState> {
        let mut running = self.running.lock().unwrap_or_else(|e| e.into_inner());
        if running.is_some() {
            return Ok(LifecycleState::Running);
        }
        let listener = TcpListener::bind(&self.endpoint).map_err(|e| {
            FrameworkError::contract(format!(
                "binding `{}` cannot listen on `{}`: {e}",
                self.binding_id, self.endpoint
            ))
        })?;
        let local_addr = listener
            .local_addr()
            .map_err(|e| FrameworkError::contract(format!("no local address: {e}")))?;

        let shutdown = Arc::new(AtomicBool::new(false));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let conns: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::new(Mutex::new(Vec::new()));

        let accept = {
            let binding = self.clone();
            let shutdown = shutdown.clone();
            let in_flight = in_flight.clone();
            let conns = conns.clone();
            thread::Builder::new()
                .name(format!("accept-{}", self.binding_id))
                .spawn(move || {
                    binding.accept_loop(listener, shutdown, in_flight, conns);
                })
                .map_err(|e| FrameworkError::crash(format!("cannot spawn accept thread: {e}")))?
        };

        log::info!(
            "binding `{}` ({}) listening on {local_addr}",
            self.binding_id,
            self.protocol
        );
        *running = Some(Running { local_addr, accept, shutdown, in_flight, conns });
        Ok(LifecycleState::Running)
    }

    /// Stops accepting, lets in-flight work finish (bounded by the
    /// contract deadline plus the probe grace), then reports Stopped.
    pub fn stop(&self) -> Result<LifecycleState> {
        let taken = self.running.lock().unwrap_or_else(|e| e.into_inner()).take();
        let Some(running) = taken else {
            return Ok(LifecycleState::Stopped);
        };
        running.shutdown.store(true, Ordering::SeqCst);
        // A throwaway connection unblocks the accept call.
        let _ = TcpStream::connect(running.local_addr);
        let _ = running.accept.join();

        let drain_budget = Duration::from_millis(
            self.stack.config.default_deadline_ms + self.stack.config.probe_interval_ms + 500,
        );
        let gave_up_at = Instant::now() + drain_budget;
        while running.in_flight.load(Ordering::SeqCst) > 0 && Instant::now() < gave_up_at {
            thread::sleep(Duration::from_millis(5));
        }
        let handles: Vec<JoinHandle<()>> =
            running.conns.lock().unwrap_or_else(|e| e.into_inner()).drain(..).collect();
        for handle in handles {
            let _ = handle.join();
        }
        log::info!("binding `{}` stopped", self.binding_id);
        Ok(LifecycleState::Stopped)
    }

    fn accept_loop(
        self: Arc<Self>,
        listener: TcpListener,
        shutdown: Arc<AtomicBool>,
        in_flight: Arc<AtomicUsize>,
        conns: Arc<Mutex<Vec<JoinHandle<()>>>>,
    ) {
        loop {
            let stream = match listener.accept() {
                Ok((stream, _)) => stream,
                Err(e) => {
                    if shutdown.load(Ordering::SeqCst) {
                        return;
                    }
                    log::warn!("binding `{}`: accept failed: {e}", self.binding_id);
                    continue;
                }
            };
            if shutdown.load(Ordering::SeqCst) {
                return;
            }
            let binding = self.clone();
            let shutdown = shutdown.clone();
            let in_flight = in_flight.clone();
            let spawned = thread::Builder::new()
                .name(format!("conn-{}", self.binding_id))
                .spawn(move || match binding.protocol {
                    Protocol::RequestWire => binding.serve_request(stream, in_flight),
                    Protocol::PubSubWire => binding.serve_pubsub(stream, shutdown),
                });
            match spawned {
                Ok(handle) => conns.lock().unwrap_or_else(|e| e.into_inner()).push(handle),
                Err(e) => log::warn!("binding `{}`: cannot spawn: {e}", self.binding_id),
            }
        }
    }

    /// One request, one response, close. The in-flight count covers the
    /// whole exchange so a stop in progress waits for it.
    fn serve_request(&self, stream: TcpStream, in_flight: Arc<AtomicUsize>) {
        in_flight.fetch_add(1, Ordering::SeqCst);
        let done = Decrement(&in_flight);

        stream.set_read_timeout(Some(IDLE_READ_TIMEOUT)).ok();
        stream.set_nodelay(true).ok();
        let mut writer = match stream.try_clone() {
            Ok(w) => w,
            Err(_) => return,
        };
        let mut reader = BufReader::new(stream);
        let response = match read_request(&mut reader) {
            Ok(Some(req)) => {
                if in_flight.load(Ordering::SeqCst) > MAX_IN_FLIGHT {
                    error_response(&FrameworkError::new(
                        ErrorKind::TransientFault,
                        "adapter is at capacity",
                    ))
                } else {
                    RestAdapter::new(self.stack.clone()).handle(&req)
                }
            }
            Ok(None) => return,
            Err(e) if e.kind == ErrorKind::ContractViolation => error_response(&e),
            // The peer vanished or never finished sending; there is nobody
            // to answer.
            Err(_) => return,
        };
        if let Err(e) = write_response(&mut writer, &response) {
            log::debug!("binding `{}`: response write failed: {e}", self.binding_id);
        }
        drop(done);
    }

    /// A long-lived frame session. Reads alternate with subscription polls
    /// on a short timeout, so `evt` frames flow while the peer is quiet and
    /// a shutdown is noticed promptly.
    fn serve_pubsub(&self, stream: TcpStream, shutdown: Arc<AtomicBool>) {
        stream.set_read_timeout(Some(EVENT_POLL_INTERVAL)).ok();
        stream.set_nodelay(true).ok();
        let mut writer = match stream.try_clone() {
            Ok(w) => w,
            Err(_) => return,
        };
        let mut reader = BufReader::new(stream);
        let mut session = PubSubSession::new(self.stack.clone());
        let mut pending: Vec<u8> = Vec::new();

        loop {
            if shutdown.load(Ordering::SeqCst) {
                return;
            }
            match reader.read_until(b'\n', &mut pending) {
                Ok(0) => {
                    // EOF. A final unterminated line still deserves its
                    // answer before the session ends.
                    if !pending.is_empty() {
                        let frame = Self::answer_line(&mut session, &pending);
                        let _ = write_line(&mut writer, &frame);
                    }
                    return;
                }
                Ok(_) if pending.last() == Some(&b'\n') => {
                    pending.pop();
                    if pending.last() == Some(&b'\r') {
                        pending.pop();
                    }
                    let frame = Self::answer_line(&mut session, &pending);
                    pending.clear();
                    if write_line(&mut writer, &frame).is_err() {
                        return;
                    }
                }
                // Delimiter not reached yet; keep what arrived and retry.
                Ok(_) => {}
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(_) => return,
            }
            for frame in session.poll_events() {
                if write_line(&mut writer, &frame).is_err() {
                    return;
                }
            }
        }
    }

    fn answer_line(session: &mut PubSubSession, raw: &[u8]) -> String {
        match std::str::from_utf8(raw) {
            Ok(line) => session.handle_line(line),
            Err(_) => err_frame(&FrameworkError::contract("frame is not utf-8")),
        }
    }
}

fn write_line(writer: &mut impl Write, frame: &str) -> std::io::Result<()> {
    writer.write_all(frame.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()
}

struct Decrement<'a>(&'a AtomicUsize);

impl Drop for Decrement<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}
