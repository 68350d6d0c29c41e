//! A running framework instance: one stack, its bindings, and the
//! maintenance heartbeat.
//!
//! The node wires the wall-clock variant of what the scenario runner wires
//! virtually. Devices are the simulated fleet running in paced mode, so a
//! served instance answers with genuine wall-time latencies; swapping real
//! hardware in means swapping the transport, nothing above it changes.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use trellis_core::clock::WallClock;
use trellis_core::config::FrameworkConfig;
use trellis_core::sim::{DeviceProfile, FaultSpec, Fleet};
use trellis_core::stack::Stack;
use trellis_core::{FrameworkError, Result};

use crate::binding::{Binding, Protocol};

const MAINTENANCE_BEAT: Duration = Duration::from_millis(50);

struct Maintenance {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<()>,
}

pub struct Node {
    pub stack: Arc<Stack>,
    pub fleet: Arc<Fleet>,
    /// Wall instant the node came up; fault windows are measured from here.
    epoch_ms: u64,
    bindings: Mutex<Vec<Arc<Binding>>>,
    maintenance: Mutex<Option<Maintenance>>,
}

impl Node {
    pub fn new(config: FrameworkConfig, seed: u64, audit_dir: &Path) -> Result<Arc<Node>> {
        let fleet = Fleet::new(seed, true);
        let stack = Arc::new(Stack::new(Arc::new(WallClock), fleet.clone(), audit_dir, config)?);
        let epoch_ms = stack.clock.now_ms();
        Ok(Arc::new(Node {
            stack,
            fleet,
            epoch_ms,
            bindings: Mutex::new(Vec::new()),
            maintenance: Mutex::new(None),
        }))
    }

    pub fn spawn_device(&self, profile: DeviceProfile) -> Result<()> {
        self.fleet.spawn_device(profile, &self.stack.registry)
    }

    /// Fault specs name instants on the scenario timeline; a served node's
    /// timeline starts when the node does, so the window shifts by the
    /// node's epoch before it reaches the fleet.
    pub fn inject_fault(&self, mut spec: FaultSpec) -> Result<()> {
        spec.start_ms += self.epoch_ms;
        self.fleet.inject_fault(spec)
    }

    /// Registers a binding. One binding per protocol: the wire framing for
    /// a protocol exists exactly once in a node.
    pub fn bind(
        &self,
        binding_id: &str,
        protocol: Protocol,
        endpoint: &str,
    ) -> Result<Arc<Binding>> {
        let mut bindings = self.bindings.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = bindings.iter().find(|b| b.protocol == protocol) {
            return Err(FrameworkError::contract(format!(
                "protocol {protocol} is already bound by `{}`",
                existing.binding_id
            )));
        }
        let binding = Binding::new(binding_id, protocol, endpoint, self.stack.clone());
        bindings.push(binding.clone());
        Ok(binding)
    }

    pub fn bindings(&self) -> Vec<Arc<Binding>> {
        self.bindings.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Starts every binding, then the maintenance heartbeat. If any
    /// binding cannot listen, the ones already started are stopped again
    /// and the error propagates.
    pub fn start(&self) -> Result<()> {
        let bindings = self.bindings();
        for (i, binding) in bindings.iter().enumerate() {
            if let Err(e) = binding.start() {
                for started in &bindings[..i] {
                    let _ = started.stop();
                }
                return Err(e);
            }
        }
        self.start_maintenance();
        Ok(())
    }

    /// Stops bindings first so consumer traffic drains while the monitor
    /// and lease beats are still alive, then parks the heartbeat.
    pub fn shutdown(&self) {
        for binding in self.bindings() {
            if let Err(e) = binding.stop() {
                log::warn!("binding `{}` did not stop cleanly: {e}", binding.binding_id);
            }
        }
        let taken = self.maintenance.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(m) = taken {
            m.stop.store(true, Ordering::SeqCst);
            let _ = m.handle.join();
        }
    }

    /// Probe ticks, lease renewals, and telemetry beats, all in wall time.
    /// The scenario runner drives the identical calls from virtual time.
    fn start_maintenance(&self) {
        let mut slot = self.maintenance.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_some() {
            return;
        }
        let stop = Arc::new(AtomicBool::new(false));
        let stack = self.stack.clone();
        let fleet = self.fleet.clone();
        let flag = stop.clone();
        let handle = thread::Builder::new()
            .name("maintenance".to_string())
            .spawn(move || {
                let probe_every = stack.config.probe_interval_ms.max(1);
                let lease_every = (stack.config.default_lease_ttl_ms / 3).max(1);
                let mut next_probe = stack.clock.now_ms() + probe_every;
                let mut next_lease = stack.clock.now_ms() + lease_every;
                let mut telemetry_due: std::collections::BTreeMap<String, u64> =
                    std::collections::BTreeMap::new();
                while !flag.load(Ordering::SeqCst) {
                    thread::sleep(MAINTENANCE_BEAT);
                    let now = stack.clock.now_ms();
                    if now >= next_probe {
                        stack.tick();
                        while next_probe <= now {
                            next_probe += probe_every;
                        }
                    }
                    if now >= next_lease {
                        fleet.renew_leases(&stack.registry, now);
                        while next_lease <= now {
                            next_lease += lease_every;
                        }
                    }
                    for (device_id, period_ms) in fleet.telemetry_schedule() {
                        let due = *telemetry_due
                            .entry(device_id.clone())
                            .or_insert(now + period_ms);
                        if now >= due {
                            if let Err(e) = fleet.publish_telemetry(&stack.bus, &device_id, now) {
                                log::warn!("telemetry beat for `{device_id}` failed: {e}");
                            }
                            let mut next = due;
                            while next <= now {
                                next += period_ms.max(1);
                            }
                            telemetry_due.insert(device_id, next);
                        }
                    }
                }
            })
            .expect("maintenance thread spawns");
        *slot = Some(Maintenance { stop, handle });
    }
}
