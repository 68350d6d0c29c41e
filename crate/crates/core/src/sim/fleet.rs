//! The device fleet as a transport.
//!
//! The fleet owns every spawned device and implements [`Transport`] over
//! them, so the whole framework talks to simulated hardware through the same
//! interface it would use for real sockets. Under the virtual clock the
//! fleet never sleeps: outcomes are computed analytically and carry the
//! instant they become known. In wall mode (`sleep: true`) the same
//! computation is paced in real time, which is what the server binary uses.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Duration;

use crate::bus::Bus;
use crate::error::{FrameworkError, Result};
use crate::message::CanonicalMessage;
use crate::registry::Registry;
use crate::transport::{CallOutcome, CallSpec, ProbeOutcome, Transport};

use super::device::{device_of, DeviceProfile, DeviceWire, FaultSpec, SimDevice};

pub struct Fleet {
    scenario_seed: u64,
    sleep: bool,
    devices: RwLock<BTreeMap<String, SimDevice>>,
}

impl Fleet {
    pub fn new(scenario_seed: u64, sleep: bool) -> Arc<Fleet> {
        Arc::new(Fleet { scenario_seed, sleep, devices: RwLock::new(BTreeMap::new()) })
    }

    /// Brings a device online: validates the profile, registers every
    /// capability it offers, and keeps the granted leases for renewal.
    pub fn spawn_device(&self, profile: DeviceProfile, registry: &Registry) -> Result<()> {
        profile.validate()?;
        let mut devices = self.devices.write().unwrap_or_else(|e| e.into_inner());
        if devices.contains_key(&profile.device_id) {
            return Err(FrameworkError::contract(format!(
                "device `{}` is already spawned",
                profile.device_id
            )));
        }
        let mut device = SimDevice::new(profile);
        for cap in &device.profile.capabilities {
            let lease = registry.register(device.descriptor(cap))?;
            device.leases.push(lease);
        }
        devices.insert(device.profile.device_id.clone(), device);
        Ok(())
    }

    /// Scripts a misbehavior window onto a spawned device.
    pub fn inject_fault(&self, spec: FaultSpec) -> Result<()> {
        spec.validate()?;
        let mut devices = self.devices.write().unwrap_or_else(|e| e.into_inner());
        let device = devices.get_mut(&spec.device_id).ok_or_else(|| {
            FrameworkError::not_found(format!("no device `{}` to fault", spec.device_id))
        })?;
        device.faults.push(spec);
        Ok(())
    }

    pub fn device_count(&self) -> usize {
        self.devices.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// Each device renews its own leases, the way real firmware would on a
    /// timer. Devices that cannot reach out right now (crashed, flapping
    /// down, or running without credentials) miss the beat and their leases
    /// keep aging.
    pub fn renew_leases(&self, registry: &Registry, now_ms: u64) {
        let mut devices = self.devices.write().unwrap_or_else(|e| e.into_inner());
        for device in devices.values_mut() {
            if !device.can_call_out(now_ms) {
                continue;
            }
            for lease in &mut device.leases {
                if let Ok(renewed) = registry.renew(lease) {
                    *lease = renewed;
                }
            }
        }
    }

    /// Devices wired for pub/sub, with their publish periods.
    pub fn telemetry_schedule(&self) -> Vec<(String, u64)> {
        self.devices
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .filter_map(|d| match d.profile.wire {
                DeviceWire::PubSub { period_ms } => {
                    Some((d.profile.device_id.clone(), period_ms))
                }
                DeviceWire::Request => None,
            })
            .collect()
    }

    /// One telemetry beat for one device: a reading per capability goes onto
    /// the bus under the capability's own topic. Returns how many messages
    /// were actually published; a device that is down or tokenless publishes
    /// nothing.
    pub fn publish_telemetry(&self, bus: &Bus, device_id: &str, now_ms: u64) -> Result<u64> {
        let mut devices = self.devices.write().unwrap_or_else(|e| e.into_inner());
        let device = devices
            .get_mut(device_id)
            .ok_or_else(|| FrameworkError::not_found(format!("no device `{device_id}`")))?;
        if !device.can_call_out(now_ms) {
            return Ok(0);
        }
        let mut published = 0;
        for i in 0..device.profile.capabilities.len() {
            let cap = device.profile.capabilities[i].clone();
            device.telemetry_seq += 1;
            let message = CanonicalMessage::request(
                format!("t-{}-{:06}", device.profile.device_id, device.telemetry_seq),
                cap.capability.clone(),
                now_ms,
                device.reading(&cap, now_ms, self.scenario_seed),
            );
            bus.publish(&cap.capability.to_string(), message)?;
            published += 1;
        }
        Ok(published)
    }

    fn pace(&self, issued_at_ms: u64, completed_at_ms: u64) {
        if self.sleep {
            thread::sleep(Duration::from_millis(completed_at_ms.saturating_sub(issued_at_ms)));
        }
    }

    fn answer_one(&self, spec: &CallSpec) -> CallOutcome {
        let devices = self.devices.read().unwrap_or_else(|e| e.into_inner());
        let device = device_of(&spec.target.service_id)
            .and_then(|id| devices.get(id));
        match device {
            Some(device) => device.answer(spec, self.scenario_seed),
            None => CallOutcome {
                result: Err(FrameworkError::crash(format!(
                    "no host behind `{}`",
                    spec.target.service_id
                ))),
                completed_at_ms: spec.issued_at_ms,
            },
        }
    }
}

impl Transport for Fleet {
    fn call(&self, spec: &CallSpec) -> CallOutcome {
        let outcome = self.answer_one(spec);
        self.pace(spec.issued_at_ms, outcome.completed_at_ms);
        outcome
    }

    /// Concurrent fan-out. Analytically the sequential computation already
    /// has parallel semantics, because each outcome depends only on its own
    /// spec's issue instant. Paced mode genuinely overlaps the waits so the
    /// slowest member, not the sum, bounds the batch.
    fn call_many(&self, specs: &[CallSpec]) -> Vec<CallOutcome> {
        let outcomes: Vec<CallOutcome> = specs.iter().map(|s| self.answer_one(s)).collect();
        if self.sleep {
            let longest = specs
                .iter()
                .zip(&outcomes)
                .map(|(s, o)| o.completed_at_ms.saturating_sub(s.issued_at_ms))
                .max()
                .unwrap_or(0);
            thread::sleep(Duration::from_millis(longest));
        }
        outcomes
    }

    fn probe(&self, service_id: &str, issued_at_ms: u64) -> ProbeOutcome {
        let devices = self.devices.read().unwrap_or_else(|e| e.into_inner());
        match device_of(service_id).and_then(|id| devices.get(id)) {
            Some(device) => device.probe_at(issued_at_ms),
            None => ProbeOutcome {
                ok: false,
                connection_refused: true,
                completed_at_ms: issued_at_ms,
            },
        }
    }
}
