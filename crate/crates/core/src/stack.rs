//! One-call wiring for a complete service fabric instance.
//!
//! Registry, bus, monitor, auditor, assembler, and gateway all need each
//! other in a fixed arrangement; this module builds that arrangement once so
//! binaries, adapters, and the simulation harness cannot wire it
//! inconsistently. The clock and the transport stay injected: the same stack
//! runs against wall time and live sockets or against the virtual clock and
//! a simulated fleet.

use std::path::Path;
use std::sync::Arc;

use crate::assembler::Assembler;
use crate::audit::Auditor;
use crate::bus::Bus;
use crate::clock::Clock;
use crate::config::FrameworkConfig;
use crate::error::Result;
use crate::gateway::Gateway;
use crate::monitor::Monitor;
use crate::registry::Registry;
use crate::transport::Transport;

pub struct Stack {
    pub config: FrameworkConfig,
    pub clock: Arc<dyn Clock>,
    pub transport: Arc<dyn Transport>,
    pub registry: Arc<Registry>,
    pub bus: Arc<Bus>,
    pub auditor: Arc<Auditor>,
    pub assembler: Arc<Assembler>,
    pub monitor: Arc<Monitor>,
    pub gateway: Arc<Gateway>,
}

impl Stack {
    pub fn new(
        clock: Arc<dyn Clock>,
        transport: Arc<dyn Transport>,
        audit_dir: &Path,
        config: FrameworkConfig,
    ) -> Result<Stack> {
        let registry = Registry::new(clock.clone(), config.default_lease_ttl_ms);
        let bus = Bus::new(clock.clone(), config.redelivery_timeout_ms, config.max_delivery_attempts);
        let auditor = Arc::new(Auditor::open(audit_dir, config.audit_rotate_records)?);
        let assembler = Assembler::new(clock.clone(), registry.clone(), transport.clone(), &config);
        let monitor =
            Monitor::new(clock.clone(), registry.clone(), transport.clone(), bus.clone(), &config);
        let gateway = Gateway::new(
            clock.clone(),
            registry.clone(),
            transport.clone(),
            assembler.clone(),
            monitor.clone(),
            auditor.clone(),
            &config,
        );
        Ok(Stack { config, clock, transport, registry, bus, auditor, assembler, monitor, gateway })
    }

    /// One maintenance beat: probe whatever is due. Callers own the cadence;
    /// the scenario runner drives this from virtual time and the server
    /// binary from a timer thread.
    pub fn tick(&self) {
        self.monitor.tick(self.clock.now_ms());
    }
}
