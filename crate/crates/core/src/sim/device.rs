//! Simulated devices: deterministic telemetry and scripted misbehavior.
//!
//! A device is pure state plus pure functions of virtual time. Its readings
//! come from generators that map (seed, instant) to a value, and its
//! failures come from fault windows that map an instant to a posture. Given
//! the same scenario seed, a device always says and does exactly the same
//! things at the same moments, which is what lets whole runs be replayed
//! byte for byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capability::Capability;
use crate::codec::Codec;
use crate::descriptor::{Granularity, ServiceClass, ServiceDescriptor, WireFormat};
use crate::error::{FrameworkError, Result};
use crate::ids::splitmix64;
use crate::registry::Lease;
use crate::schema::Schema;
use crate::transport::{CallOutcome, CallSpec, ProbeOutcome};
use crate::value::{CanonicalValue, ValueKind};

/// How a reading evolves over virtual time. Every generator is a pure
/// function of (time, seed), so sampling twice at one instant agrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Constant { value: f64 },
    Ramp { start: f64, per_second: f64 },
    Random {
        #[serde(default)]
        seed: u64,
        min: f64,
        max: f64,
    },
}

impl Generator {
    pub fn sample(&self, at_ms: u64, scenario_seed: u64) -> f64 {
        match self {
            Generator::Constant { value } => *value,
            Generator::Ramp { start, per_second } => start + per_second * at_ms as f64 / 1000.0,
            Generator::Random { seed, min, max } => {
                let stream = splitmix64(scenario_seed ^ *seed);
                let bits = splitmix64(stream.wrapping_add(at_ms));
                let unit = (bits >> 11) as f64 / (1u64 << 53) as f64;
                min + (max - min) * unit
            }
        }
    }
}

/// How the device is attached southbound: request/response only, or also
/// publishing telemetry onto the bus at a fixed period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceWire {
    Request,
    PubSub { period_ms: u64 },
}

impl Default for DeviceWire {
    fn default() -> DeviceWire {
        DeviceWire::Request
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityProfile {
    pub capability: Capability,
    pub processing_delay_ms: u64,
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub device_id: String,
    pub capabilities: Vec<CapabilityProfile>,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub wire: DeviceWire,
    #[serde(default = "default_format")]
    pub format: WireFormat,
}

fn default_format() -> WireFormat {
    WireFormat::Json
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if self.device_id.is_empty() {
            return Err(FrameworkError::contract("device profile has empty device_id"));
        }
        if self.capabilities.is_empty() {
            return Err(FrameworkError::contract(format!(
                "device `{}` offers no capabilities",
                self.device_id
            )));
        }
        for (i, cap) in self.capabilities.iter().enumerate() {
            if self.capabilities[..i].iter().any(|c| c.capability == cap.capability) {
                return Err(FrameworkError::contract(format!(
                    "device `{}` lists `{}` twice",
                    self.device_id, cap.capability
                )));
            }
        }
        if let DeviceWire::PubSub { period_ms: 0 } = self.wire {
            return Err(FrameworkError::contract(format!(
                "device `{}` has a zero telemetry period",
                self.device_id
            )));
        }
        Ok(())
    }
}

/// One scripted misbehavior window. Faults switch on at `start_ms`, hold for
/// `duration_ms`, then the device heals itself with no outside intervention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub device_id: String,
    #[serde(flatten)]
    pub kind: FaultKind,
    pub start_ms: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// The process is gone: connections are refused outright.
    Crash,
    /// Connections open but requests vanish; nothing ever comes back.
    Omission,
    /// Requests are answered, later than they should be.
    Timing { extra_ms: u64 },
    /// The device's own outbound calls (telemetry, lease renewals) carry no
    /// credentials and are turned away; inbound serving is unaffected.
    Unauthorised,
    /// The node bounces: down one flap period, up the next, repeatedly.
    Transient { flap_period_ms: u64 },
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration_ms == 0 {
            return Err(FrameworkError::contract(format!(
                "fault on `{}` has zero duration",
                self.device_id
            )));
        }
        match self.kind {
            FaultKind::Timing { extra_ms: 0 } => Err(FrameworkError::contract(format!(
                "timing fault on `{}` adds no delay",
                self.device_id
            ))),
            FaultKind::Transient { flap_period_ms: 0 } => Err(FrameworkError::contract(
                format!("transient fault on `{}` has a zero flap period", self.device_id),
            )),
            _ => Ok(()),
        }
    }

    pub fn active_at(&self, now_ms: u64) -> bool {
        now_ms >= self.start_ms && now_ms < self.start_ms + self.duration_ms
    }
}

/// What the device is doing at one instant, after folding in active faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Posture {
    Serving,
    /// Crash, or the down half of a transient flap.
    Refusing,
    /// Omission: the connection works, the request black-holes.
    Silent,
    /// Timing fault: answers, this much later than normal.
    Delayed { extra_ms: u64 },
    /// Serving inbound, but outbound calls carry no credentials.
    Tokenless,
}

/// A spawned device: its profile, its scripted faults, and the leases it
/// holds with the registry.
#[derive(Debug)]
pub struct SimDevice {
    pub profile: DeviceProfile,
    pub faults: Vec<FaultSpec>,
    pub leases: Vec<Lease>,
    pub telemetry_seq: u64,
    codec: Codec,
}

/// The registry identity for one capability of one device.
pub fn service_id(device_id: &str, capability: &Capability) -> String {
    format!("{device_id}/{capability}")
}

/// Splits a service id back into its device half, if it has the simulated
/// fleet's shape.
pub fn device_of(service_id: &str) -> Option<&str> {
    service_id.split_once('/').map(|(device, _)| device)
}

impl SimDevice {
    pub fn new(profile: DeviceProfile) -> SimDevice {
        SimDevice { profile, faults: Vec::new(), leases: Vec::new(), telemetry_seq: 0, codec: Codec::default() }
    }

    /// The first active fault window decides the posture; overlapping faults
    /// later in the list wait their turn.
    pub fn posture_at(&self, now_ms: u64) -> Posture {
        for fault in &self.faults {
            if !fault.active_at(now_ms) {
                continue;
            }
            return match fault.kind {
                FaultKind::Crash => Posture::Refusing,
                FaultKind::Omission => Posture::Silent,
                FaultKind::Timing { extra_ms } => Posture::Delayed { extra_ms },
                FaultKind::Unauthorised => Posture::Tokenless,
                FaultKind::Transient { flap_period_ms } => {
                    let phase = (now_ms - fault.start_ms) / flap_period_ms;
                    if phase % 2 == 0 {
                        Posture::Refusing
                    } else {
                        Posture::Serving
                    }
                }
            };
        }
        Posture::Serving
    }

    /// Whether device-initiated traffic (telemetry, lease renewals) gets
    /// through at this instant.
    pub fn can_call_out(&self, now_ms: u64) -> bool {
        matches!(self.posture_at(now_ms), Posture::Serving | Posture::Delayed { .. })
    }

    pub fn descriptor(&self, cap: &CapabilityProfile) -> ServiceDescriptor {
        ServiceDescriptor {
            service_id: service_id(&self.profile.device_id, &cap.capability),
            device_id: self.profile.device_id.clone(),
            capability: cap.capability.clone(),
            class: ServiceClass::Functional,
            preferred_format: self.profile.format,
            granularity: Granularity::Atomic,
            cost_hint_ms: cap.processing_delay_ms.min(u32::MAX as u64) as u32,
            input_schema: Schema::default(),
            output_schema: Schema::new([("value".to_string(), ValueKind::Float)]),
            domain: self.profile.domain.clone(),
            lease_ttl_ms: 0,
        }
    }

    /// The body this device reports for a capability at an instant.
    pub fn reading(&self, cap: &CapabilityProfile, at_ms: u64, scenario_seed: u64) -> CanonicalValue {
        let mut body = BTreeMap::new();
        body.insert(
            "value".to_string(),
            CanonicalValue::Float(cap.generator.sample(at_ms, scenario_seed)),
        );
        body.insert("device_id".to_string(), CanonicalValue::Str(self.profile.device_id.clone()));
        body.insert("sampled_at_ms".to_string(), CanonicalValue::Int(at_ms as i64));
        CanonicalValue::Map(body)
    }

    /// The device's side of one request/response exchange, computed
    /// analytically: the outcome carries the instant it becomes known, and
    /// nobody sleeps.
    pub fn answer(&self, spec: &CallSpec, scenario_seed: u64) -> CallOutcome {
        let issued = spec.issued_at_ms;
        match self.posture_at(issued) {
            Posture::Refusing => CallOutcome {
                result: Err(FrameworkError::crash(format!(
                    "{}: connection refused",
                    self.profile.device_id
                ))),
                completed_at_ms: issued,
            },
            Posture::Silent => CallOutcome {
                result: Err(FrameworkError::omission(format!(
                    "{}: no response within {}ms",
                    self.profile.device_id, spec.timeout_ms
                ))),
                completed_at_ms: issued + spec.timeout_ms,
            },
            posture => {
                let extra = match posture {
                    Posture::Delayed { extra_ms } => extra_ms,
                    _ => 0,
                };
                self.respond(spec, extra, scenario_seed)
            }
        }
    }

    fn respond(&self, spec: &CallSpec, extra_ms: u64, scenario_seed: u64) -> CallOutcome {
        let issued = spec.issued_at_ms;
        let request = match self.codec.decode(&spec.request) {
            Ok(msg) => msg,
            Err(e) => {
                return CallOutcome { result: Err(e), completed_at_ms: issued };
            }
        };
        let Some(cap) = self.profile.capabilities.iter().find(|c| c.capability == request.capability)
        else {
            return CallOutcome {
                result: Err(FrameworkError::not_found(format!(
                    "{} does not serve `{}`",
                    self.profile.device_id, request.capability
                ))),
                completed_at_ms: issued,
            };
        };
        let completed = issued + cap.processing_delay_ms + extra_ms;
        if completed - issued > spec.timeout_ms {
            // The caller stopped waiting before the answer existed. From the
            // outside that is indistinguishable from silence.
            return CallOutcome {
                result: Err(FrameworkError::omission(format!(
                    "{}: no response within {}ms",
                    self.profile.device_id, spec.timeout_ms
                ))),
                completed_at_ms: issued + spec.timeout_ms,
            };
        }
        let reply = request.reply(completed, self.reading(cap, completed, scenario_seed));
        CallOutcome {
            result: self.codec.encode(&reply, self.profile.format),
            completed_at_ms: completed,
        }
    }

    /// Probes are connection-level: they fail only when the node itself is
    /// unreachable. A device that swallows requests or answers late still
    /// accepts connections, which is exactly what makes those faults need
    /// request-path evidence to classify.
    pub fn probe_at(&self, now_ms: u64) -> ProbeOutcome {
        match self.posture_at(now_ms) {
            Posture::Refusing => {
                ProbeOutcome { ok: false, connection_refused: true, completed_at_ms: now_ms }
            }
            _ => ProbeOutcome { ok: true, connection_refused: false, completed_at_ms: now_ms },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::CanonicalMessage;

    fn profile() -> DeviceProfile {
        DeviceProfile {
            device_id: "dev-t".to_string(),
            capabilities: vec![CapabilityProfile {
                capability: Capability::parse("weather.temperature.read").unwrap(),
                processing_delay_ms: 200,
                generator: Generator::Constant { value: 21.5 },
            }],
            domain: "home".to_string(),
            wire: DeviceWire::Request,
            format: WireFormat::Json,
        }
    }

    fn call(device: &SimDevice, issued: u64, timeout: u64) -> CallOutcome {
        let cap = Capability::parse("weather.temperature.read").unwrap();
        let request = CanonicalMessage::request("m-1", cap, issued, CanonicalValue::Null);
        let codec = Codec::default();
        let spec = CallSpec {
            target: device.descriptor(&device.profile.capabilities[0]),
            request: codec.encode(&request, WireFormat::Json).unwrap(),
            issued_at_ms: issued,
            timeout_ms: timeout,
        };
        device.answer(&spec, 0)
    }

    #[test]
    fn generators_are_pure_functions_of_time_and_seed() {
        let g = Generator::Random { seed: 7, min: -10.0, max: 35.0 };
        assert_eq!(g.sample(1_000, 42), g.sample(1_000, 42));
        assert_ne!(g.sample(1_000, 42), g.sample(2_000, 42));
        assert_ne!(g.sample(1_000, 42), g.sample(1_000, 43));
        let v = g.sample(123_456, 42);
        assert!((-10.0..35.0).contains(&v));

        let r = Generator::Ramp { start: 10.0, per_second: 2.0 };
        assert_eq!(r.sample(1_500, 0), 13.0);
    }

    #[test]
    fn a_healthy_device_answers_after_its_processing_delay() {
        let device = SimDevice::new(profile());
        let outcome = call(&device, 1_000, 5_000);
        assert_eq!(outcome.completed_at_ms, 1_200);
        let reply = Codec::default().decode(&outcome.result.unwrap()).unwrap();
        assert_eq!(reply.correlation_id.as_deref(), Some("m-1"));
        assert_eq!(reply.body.as_map().unwrap().get("value"), Some(&CanonicalValue::Float(21.5)));
    }

    #[test]
    fn fault_windows_switch_postures_and_heal() {
        let mut device = SimDevice::new(profile());
        device.faults.push(FaultSpec {
            device_id: "dev-t".to_string(),
            kind: FaultKind::Crash,
            start_ms: 5_000,
            duration_ms: 3_000,
        });
        assert_eq!(device.posture_at(4_999), Posture::Serving);
        assert_eq!(device.posture_at(5_000), Posture::Refusing);
        assert_eq!(device.posture_at(7_999), Posture::Refusing);
        assert_eq!(device.posture_at(8_000), Posture::Serving);

        assert!(call(&device, 6_000, 5_000).result.is_err());
        assert!(call(&device, 8_000, 5_000).result.is_ok());
    }

    #[test]
    fn omission_burns_the_full_timeout() {
        let mut device = SimDevice::new(profile());
        device.faults.push(FaultSpec {
            device_id: "dev-t".to_string(),
            kind: FaultKind::Omission,
            start_ms: 0,
            duration_ms: 10_000,
        });
        let outcome = call(&device, 1_000, 2_000);
        assert_eq!(outcome.completed_at_ms, 3_000);
        assert_eq!(outcome.result.unwrap_err().kind, crate::error::ErrorKind::OmissionFailure);
        // The probe still succeeds: the node is up, the service is deaf.
        assert!(device.probe_at(1_000).ok);
    }

    #[test]
    fn timing_fault_delays_the_answer_within_patience() {
        let mut device = SimDevice::new(profile());
        device.faults.push(FaultSpec {
            device_id: "dev-t".to_string(),
            kind: FaultKind::Timing { extra_ms: 1_200 },
            start_ms: 0,
            duration_ms: 10_000,
        });
        let outcome = call(&device, 0, 2_000);
        assert_eq!(outcome.completed_at_ms, 1_400);
        assert!(outcome.result.is_ok());

        // Beyond the caller's patience the lateness collapses into silence.
        let outcome = call(&device, 0, 1_000);
        assert_eq!(outcome.completed_at_ms, 1_000);
        assert_eq!(outcome.result.unwrap_err().kind, crate::error::ErrorKind::OmissionFailure);
    }

    #[test]
    fn transient_fault_alternates_down_and_up() {
        let mut device = SimDevice::new(profile());
        device.faults.push(FaultSpec {
            device_id: "dev-t".to_string(),
            kind: FaultKind::Transient { flap_period_ms: 1_000 },
            start_ms: 2_000,
            duration_ms: 4_000,
        });
        assert_eq!(device.posture_at(2_000), Posture::Refusing);
        assert_eq!(device.posture_at(3_000), Posture::Serving);
        assert_eq!(device.posture_at(4_000), Posture::Refusing);
        assert_eq!(device.posture_at(5_500), Posture::Serving);
        assert_eq!(device.posture_at(6_000), Posture::Serving);
        assert!(!device.probe_at(4_000).ok);
        assert!(device.probe_at(3_000).ok);
    }

    #[test]
    fn profile_validation_catches_malformed_devices() {
        let mut p = profile();
        p.capabilities.push(p.capabilities[0].clone());
        assert!(p.validate().is_err());

        let mut p = profile();
        p.capabilities.clear();
        assert!(p.validate().is_err());

        let mut p = profile();
        p.wire = DeviceWire::PubSub { period_ms: 0 };
        assert!(p.validate().is_err());

        assert!(profile().validate().is_ok());
    }

    #[test]
    fn fault_validation_enforces_spec_shape() {
        let ok = FaultSpec {
            device_id: "d".to_string(),
            kind: FaultKind::Timing { extra_ms: 100 },
            start_ms: 0,
            duration_ms: 1,
        };
        assert!(ok.validate().is_ok());
        let zero_extra = FaultSpec { kind: FaultKind::Timing { extra_ms: 0 }, ..ok.clone() };
        assert!(zero_extra.validate().is_err());
        let zero_duration = FaultSpec { duration_ms: 0, ..ok.clone() };
        assert!(zero_duration.validate().is_err());
    }

    #[test]
    fn fault_specs_round_trip_through_json_with_flat_keys() {
        let json = r#"{"device_id":"dev-t","kind":"timing","extra_ms":1200,"start_ms":0,"duration_ms":5000}"#;
        let spec: FaultSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.kind, FaultKind::Timing { extra_ms: 1_200 });
        let back = serde_json::to_string(&spec).unwrap();
        let again: FaultSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(again, spec);
    }
}
