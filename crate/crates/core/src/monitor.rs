//! The service monitor: periodic liveness probing, fault classification,
//! circuit breaking, and failover.
//!
//! Each registered service gets a breaker. Consecutive probe failures open
//! it, which quarantines the service in the registry (so discovery stops
//! offering it) and triggers a failover announcement on the bus. After a
//! cooldown the breaker admits one trial probe; success closes it and lifts
//! the quarantine. Probe history also feeds flap detection, which separates
//! transient faults from hard failures: a service that keeps bouncing inside
//! the flap window is classified transient rather than declared dead.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bus::Bus;
use crate::capability::Capability;
use crate::clock::Clock;
use crate::config::FrameworkConfig;
use crate::descriptor::ServiceDescriptor;
use crate::error::ErrorKind;
use crate::ids::IdGen;
use crate::message::CanonicalMessage;
use crate::registry::Registry;
use crate::transport::Transport;
use crate::value::CanonicalValue;

pub const REDIRECT_TOPIC: &str = "service.redirect";
pub const UNAVAILABLE_TOPIC: &str = "service.unavailable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthStatus {
    Up,
    Suspect,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Breaker {
    Closed,
    Open { until_ms: u64 },
    HalfOpen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthState {
    pub service_id: String,
    pub status: HealthStatus,
    pub consecutive_failures: u32,
    pub breaker: Breaker,
    pub last_probe_ms: u64,
    pub last_classification: Option<ErrorKind>,
}

/// What was observed about one interaction with a service. Inputs to the
/// classifier; a passing probe with the three failure flags clear means
/// nothing abnormal was seen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Symptoms {
    pub probe_ok: bool,
    pub request_timed_out: bool,
    pub connection_refused: bool,
    pub deadline_exceeded: bool,
}

impl Symptoms {
    /// The baseline for request-path evidence, where no probe was involved:
    /// start from "the service is reachable" and set what actually went
    /// wrong.
    pub fn healthy() -> Symptoms {
        Symptoms { probe_ok: true, ..Symptoms::default() }
    }
}

/// Maps a symptom tuple to the fault taxonomy. Total and deterministic:
/// every combination yields exactly one answer, `None` meaning healthy.
///
/// Precedence: an actively refused connection or a failed probe is crash
/// evidence and wins; a timed-out request against a probe-healthy service
/// means the server is not receiving requests (omission); a response that
/// arrived but too late is a timing fault. Some combinations cannot arise
/// from one observation window (a refused connection never coexists with a
/// successful probe of the same endpoint) but they still classify by the
/// same precedence, so the function stays total.
pub fn classify(symptoms: Symptoms) -> Option<ErrorKind> {
    if symptoms.connection_refused || !symptoms.probe_ok {
        Some(ErrorKind::CrashFailure)
    } else if symptoms.request_timed_out {
        Some(ErrorKind::OmissionFailure)
    } else if symptoms.deadline_exceeded {
        Some(ErrorKind::TimingFault)
    } else {
        None
    }
}

/// What `on_down` decided for a broken service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailoverAction {
    /// Traffic should move to this equivalent provider.
    Redirect(ServiceDescriptor),
    /// No equivalent exists; the capability is out of service.
    Unavailable,
}

#[derive(Debug)]
struct Track {
    state: HealthState,
    history: VecDeque<bool>,
}

impl Track {
    fn new(service_id: &str) -> Track {
        Track {
            state: HealthState {
                service_id: service_id.to_string(),
                status: HealthStatus::Up,
                consecutive_failures: 0,
                breaker: Breaker::Closed,
                last_probe_ms: 0,
                last_classification: None,
            },
            history: VecDeque::new(),
        }
    }

    fn record(&mut self, ok: bool, window: usize) {
        self.history.push_back(ok);
        while self.history.len() > window {
            self.history.pop_front();
        }
    }

    /// A service flaps when its probe outcomes changed direction at least
    /// `min_transitions` times within the window.
    fn transitions(&self) -> u32 {
        self.history
            .iter()
            .zip(self.history.iter().skip(1))
            .filter(|(a, b)| a != b)
            .count() as u32
    }
}

pub struct Monitor {
    clock: Arc<dyn Clock>,
    registry: Arc<Registry>,
    transport: Arc<dyn Transport>,
    bus: Arc<Bus>,
    probe_interval_ms: u64,
    failure_threshold: u32,
    cooldown_intervals: u32,
    flap_window: usize,
    flap_transitions: u32,
    event_ids: IdGen,
    tracks: Mutex<BTreeMap<String, Track>>,
}

impl Monitor {
    pub fn new(
        clock: Arc<dyn Clock>,
        registry: Arc<Registry>,
        transport: Arc<dyn Transport>,
        bus: Arc<Bus>,
        config: &FrameworkConfig,
    ) -> Arc<Monitor> {
        Arc::new(Monitor {
            clock,
            registry,
            transport,
            bus,
            probe_interval_ms: config.probe_interval_ms,
            failure_threshold: config.failure_threshold,
            cooldown_intervals: config.cooldown_intervals,
            flap_window: config.flap_window_intervals as usize,
            flap_transitions: config.flap_transitions,
            event_ids: IdGen::new("ev"),
            tracks: Mutex::new(BTreeMap::new()),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, Track>> {
        self.tracks.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Probes every registered service whose probe is due. Call once per
    /// probe interval (the simulation scheduler and the serve loop both do).
    pub fn tick(&self, now_ms: u64) {
        for entry in self.registry.entries() {
            let due = {
                let tracks = self.lock();
                tracks
                    .get(&entry.descriptor.service_id)
                    .map(|t| now_ms >= t.state.last_probe_ms + self.probe_interval_ms)
                    .unwrap_or(true)
            };
            if due {
                self.probe(&entry.descriptor.service_id, now_ms);
            }
        }
    }

    /// One probe cycle for one service: breaker bookkeeping, history, and
    /// failover when the failure threshold trips.
    pub fn probe(&self, service_id: &str, now_ms: u64) -> HealthState {
        let mut tracks = self.lock();
        let track = tracks.entry(service_id.to_string()).or_insert_with(|| Track::new(service_id));

        if let Breaker::Open { until_ms } = track.state.breaker {
            if now_ms < until_ms {
                // The breaker holds; nothing is probed while it is open.
                return track.state.clone();
            }
            track.state.breaker = Breaker::HalfOpen;
        }
        let trial = track.state.breaker == Breaker::HalfOpen;

        let outcome = self.transport.probe(service_id, now_ms);
        track.state.last_probe_ms = now_ms;
        track.record(outcome.ok, self.flap_window);
        let flapping = track.transitions() >= self.flap_transitions;

        if outcome.ok {
            track.state.consecutive_failures = 0;
            track.state.breaker = Breaker::Closed;
            if flapping {
                track.state.status = HealthStatus::Suspect;
                track.state.last_classification = Some(ErrorKind::TransientFault);
            } else {
                track.state.status = HealthStatus::Up;
                track.state.last_classification = None;
            }
            if trial {
                // The trial succeeded, so the service rejoins the rotation.
                let _ = self.registry.set_quarantine(service_id, false);
                log::info!("monitor: {service_id} recovered, breaker closed");
            }
            return track.state.clone();
        }

        track.state.consecutive_failures += 1;
        track.state.last_classification = Some(if flapping {
            ErrorKind::TransientFault
        } else {
            classify(Symptoms {
                probe_ok: false,
                connection_refused: outcome.connection_refused,
                ..Symptoms::default()
            })
            .expect("failed probe always classifies")
        });

        let opens = trial || track.state.consecutive_failures >= self.failure_threshold;
        if opens {
            track.state.breaker =
                Breaker::Open { until_ms: now_ms + self.cooldown_intervals as u64 * self.probe_interval_ms };
            track.state.status = HealthStatus::Down;
            let state = track.state.clone();
            if !trial {
                drop(tracks);
                self.on_down(service_id);
            }
            return state;
        }
        track.state.status = HealthStatus::Suspect;
        track.state.clone()
    }

    /// Failover for a service whose breaker just opened: quarantine it, look
    /// for an equivalent provider, and announce the outcome on the bus.
    pub fn on_down(&self, service_id: &str) -> FailoverAction {
        let _ = self.registry.set_quarantine(service_id, true);
        match self.registry.resolve_equivalent(service_id) {
            Ok(replacement) => {
                self.publish_event(
                    REDIRECT_TOPIC,
                    CanonicalValue::map([
                        ("old".to_string(), CanonicalValue::str(service_id)),
                        ("new".to_string(), CanonicalValue::str(&replacement.service_id)),
                    ]),
                );
                log::warn!("monitor: {service_id} down, redirecting to {}", replacement.service_id);
                FailoverAction::Redirect(replacement)
            }
            Err(_) => {
                self.publish_event(
                    UNAVAILABLE_TOPIC,
                    CanonicalValue::map([(
                        "service".to_string(),
                        CanonicalValue::str(service_id),
                    )]),
                );
                log::warn!("monitor: {service_id} down, no equivalent provider");
                FailoverAction::Unavailable
            }
        }
    }

    fn publish_event(&self, topic: &str, body: CanonicalValue) {
        let capability = Capability::parse(topic).expect("monitor topics parse");
        let msg =
            CanonicalMessage::request(self.event_ids.next(), capability, self.clock.now_ms(), body);
        if let Err(e) = self.bus.publish(topic, msg) {
            log::error!("monitor: failed to publish {topic}: {e}");
        }
    }

    /// Health for one service, if it has ever been probed.
    pub fn health(&self, service_id: &str) -> Option<HealthState> {
        self.lock().get(service_id).map(|t| t.state.clone())
    }

    pub fn all_health(&self) -> Vec<HealthState> {
        self.lock().values().map(|t| t.state.clone()).collect()
    }

    pub fn is_flapping(&self, service_id: &str) -> bool {
        self.lock()
            .get(service_id)
            .map(|t| t.transitions() >= self.flap_transitions)
            .unwrap_or(false)
    }

    /// Folds flap knowledge into a call error: a crash or omission against a
    /// service that is bouncing within the flap window is reported as the
    /// transient fault it is.
    pub fn refine_kind(&self, service_id: &str, kind: ErrorKind) -> ErrorKind {
        if matches!(kind, ErrorKind::CrashFailure | ErrorKind::OmissionFailure)
            && self.is_flapping(service_id)
        {
            ErrorKind::TransientFault
        } else {
            kind
        }
    }

    /// Records request-path evidence observed by the gateway (timeouts,
    /// late responses) against a service's health.
    pub fn observe(&self, service_id: &str, symptoms: Symptoms) -> Option<ErrorKind> {
        let classified = classify(symptoms);
        if let Some(kind) = classified {
            let mut tracks = self.lock();
            let track =
                tracks.entry(service_id.to_string()).or_insert_with(|| Track::new(service_id));
            track.state.last_classification = Some(kind);
            if track.state.status == HealthStatus::Up {
                track.state.status = HealthStatus::Suspect;
            }
        }
        classified
    }
}
