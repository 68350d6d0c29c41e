//! The capability-indexed service registry.
//!
//! Services are catalogued by what they do, not by which device offers them.
//! Lookups ask for a capability and get every live provider back, so a
//! replacement device satisfies consumers without any identifier changing
//! hands. Liveness is lease-based: descriptors expire unless renewed, and a
//! re-registration after expiry bumps the service's epoch so stale references
//! are detectable.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::capability::Capability;
use crate::clock::Clock;
use crate::composite::CompositeSpec;
use crate::descriptor::{Granularity, RegisteredService, ServiceClass, ServiceDescriptor};
use crate::error::{FrameworkError, Result};
use crate::schema::Schema;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub service_id: String,
    pub expires_at_ms: u64,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrySnapshot {
    pub entries: Vec<RegisteredService>,
    pub composites: Vec<CompositeSpec>,
}

/// What the registry remembers about a service_id after it is gone, so
/// equivalents can be resolved for providers that are no longer live.
#[derive(Debug, Clone)]
struct HistoryEntry {
    capability: Capability,
    output_schema: Schema,
    epoch: u64,
}

#[derive(Default)]
struct Inner {
    live: BTreeMap<String, RegisteredService>,
    history: BTreeMap<String, HistoryEntry>,
    composites: BTreeMap<Capability, CompositeSpec>,
}

pub struct Registry {
    clock: Arc<dyn Clock>,
    default_lease_ttl_ms: u64,
    inner: Mutex<Inner>,
}

impl Registry {
    pub fn new(clock: Arc<dyn Clock>, default_lease_ttl_ms: u64) -> Arc<Registry> {
        Arc::new(Registry { clock, default_lease_ttl_ms, inner: Mutex::new(Inner::default()) })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers a descriptor and grants its lease. A service_id can only be
    /// re-registered once its previous lease has lapsed or been dropped, and
    /// doing so increments the epoch.
    pub fn register(&self, descriptor: ServiceDescriptor) -> Result<Lease> {
        descriptor.validate()?;
        let now = self.clock.now_ms();
        let ttl = if descriptor.lease_ttl_ms == 0 {
            self.default_lease_ttl_ms
        } else {
            descriptor.lease_ttl_ms
        };
        let mut inner = self.lock();
        if descriptor.granularity == Granularity::Composite
            && !inner.composites.contains_key(&descriptor.capability)
        {
            return Err(FrameworkError::contract(format!(
                "composite descriptor `{}` has no registered composite spec",
                descriptor.service_id
            )));
        }
        if let Some(existing) = inner.live.get(&descriptor.service_id) {
            if existing.lease_expires_at_ms > now {
                return Err(FrameworkError::contract(format!(
                    "service_id `{}` already holds a live lease",
                    descriptor.service_id
                )));
            }
        }
        let epoch = inner
            .history
            .get(&descriptor.service_id)
            .map(|h| h.epoch + 1)
            .unwrap_or(1);
        inner.history.insert(
            descriptor.service_id.clone(),
            HistoryEntry {
                capability: descriptor.capability.clone(),
                output_schema: descriptor.output_schema.clone(),
                epoch,
            },
        );
        let entry = RegisteredService {
            lease_renewed_at_ms: now,
            lease_expires_at_ms: now + ttl,
            epoch,
            quarantined: false,
            descriptor,
        };
        let lease = Lease {
            service_id: entry.descriptor.service_id.clone(),
            expires_at_ms: entry.lease_expires_at_ms,
            epoch,
        };
        inner.live.insert(entry.descriptor.service_id.clone(), entry);
        Ok(lease)
    }

    /// Extends a live lease by its ttl from now. The epoch never changes on
    /// renewal.
    pub fn renew(&self, lease: &Lease) -> Result<Lease> {
        let now = self.clock.now_ms();
        let mut inner = self.lock();
        let entry = inner.live.get_mut(&lease.service_id).ok_or_else(|| {
            FrameworkError::not_found(format!("no live lease for `{}`", lease.service_id))
        })?;
        if entry.lease_expires_at_ms <= now || entry.epoch != lease.epoch {
            return Err(FrameworkError::not_found(format!(
                "lease for `{}` has lapsed",
                lease.service_id
            )));
        }
        let ttl = entry.lease_expires_at_ms - entry.lease_renewed_at_ms;
        entry.lease_renewed_at_ms = now;
        entry.lease_expires_at_ms = now + ttl;
        Ok(Lease {
            service_id: lease.service_id.clone(),
            expires_at_ms: entry.lease_expires_at_ms,
            epoch: entry.epoch,
        })
    }

    /// Drops a service from the live set. Idempotent; history is retained so
    /// equivalents can still be resolved against the departed service.
    pub fn deregister(&self, service_id: &str) {
        self.lock().live.remove(service_id);
    }

    /// All live, non-quarantined providers of a capability, cheapest first,
    /// ties broken by service_id. Non-functional services stay hidden unless
    /// the caller is platform-internal.
    pub fn discover(
        &self,
        capability: &Capability,
        domain: Option<&str>,
        expose_nonfunctional: bool,
    ) -> Vec<ServiceDescriptor> {
        let now = self.clock.now_ms();
        let inner = self.lock();
        let mut hits: Vec<&RegisteredService> = inner
            .live
            .values()
            .filter(|e| e.lease_expires_at_ms > now && !e.quarantined)
            .filter(|e| e.descriptor.capability == *capability)
            .filter(|e| domain.is_none_or(|d| e.descriptor.domain == d))
            .filter(|e| expose_nonfunctional || e.descriptor.class == ServiceClass::Functional)
            .collect();
        hits.sort_by(|a, b| {
            (a.descriptor.cost_hint_ms, &a.descriptor.service_id)
                .cmp(&(b.descriptor.cost_hint_ms, &b.descriptor.service_id))
        });
        hits.into_iter().map(|e| e.descriptor.clone()).collect()
    }

    /// Finds a live stand-in for a failed provider: same capability, output
    /// schema that covers everything the failed provider promised, different
    /// service_id. This is what lets a consumer keep working when the device
    /// behind a service disappears and another device offers the same thing.
    pub fn resolve_equivalent(&self, failed_service_id: &str) -> Result<ServiceDescriptor> {
        let reference = {
            let inner = self.lock();
            let entry = inner.history.get(failed_service_id).ok_or_else(|| {
                FrameworkError::not_found(format!(
                    "`{failed_service_id}` was never registered here"
                ))
            })?;
            (entry.capability.clone(), entry.output_schema.clone())
        };
        let candidates = self.discover(&reference.0, None, true);
        candidates
            .into_iter()
            .find(|c| c.service_id != failed_service_id && reference.1.satisfied_by(&c.output_schema))
            .ok_or_else(|| {
                FrameworkError::not_found(format!(
                    "no equivalent provider for `{}` ({})",
                    failed_service_id, reference.0
                ))
            })
    }

    /// Marks or clears quarantine. Quarantined services keep their lease but
    /// are invisible to discovery until the monitor lifts the flag.
    pub fn set_quarantine(&self, service_id: &str, quarantined: bool) -> Result<()> {
        let mut inner = self.lock();
        match inner.live.get_mut(service_id) {
            Some(entry) => {
                entry.quarantined = quarantined;
                Ok(())
            }
            None => Err(FrameworkError::not_found(format!("`{service_id}` is not live"))),
        }
    }

    /// Every live entry, quarantined ones included, for the monitor and the
    /// operator listing. Sorted by service_id.
    pub fn entries(&self) -> Vec<RegisteredService> {
        let now = self.clock.now_ms();
        self.lock()
            .live
            .values()
            .filter(|e| e.lease_expires_at_ms > now)
            .cloned()
            .collect()
    }

    pub fn lookup(&self, service_id: &str) -> Option<RegisteredService> {
        let now = self.clock.now_ms();
        self.lock()
            .live
            .get(service_id)
            .filter(|e| e.lease_expires_at_ms > now)
            .cloned()
    }

    pub fn put_composite(&self, spec: CompositeSpec) -> Result<()> {
        spec.validate()?;
        self.lock().composites.insert(spec.composite_capability.clone(), spec);
        Ok(())
    }

    pub fn composite(&self, capability: &Capability) -> Option<CompositeSpec> {
        self.lock().composites.get(capability).cloned()
    }

    pub fn composites(&self) -> Vec<CompositeSpec> {
        self.lock().composites.values().cloned().collect()
    }

    pub fn snapshot(&self) -> RegistrySnapshot {
        let inner = self.lock();
        RegistrySnapshot {
            entries: inner.live.values().cloned().collect(),
            composites: inner.composites.values().cloned().collect(),
        }
    }

    /// Replaces the registry contents with a snapshot's. Epoch counters are
    /// restored from the entries so re-registrations after a restart keep
    /// incrementing rather than reset.
    pub fn restore(&self, snapshot: RegistrySnapshot) -> Result<()> {
        let mut live = BTreeMap::new();
        let mut history = BTreeMap::new();
        for entry in snapshot.entries {
            entry.descriptor.validate()?;
            history.insert(
                entry.descriptor.service_id.clone(),
                HistoryEntry {
                    capability: entry.descriptor.capability.clone(),
                    output_schema: entry.descriptor.output_schema.clone(),
                    epoch: entry.epoch,
                },
            );
            if live.insert(entry.descriptor.service_id.clone(), entry).is_some() {
                return Err(FrameworkError::contract("snapshot has duplicate service_id"));
            }
        }
        let mut composites = BTreeMap::new();
        for spec in snapshot.composites {
            spec.validate()?;
            composites.insert(spec.composite_capability.clone(), spec);
        }
        let mut inner = self.lock();
        inner.live = live;
        inner.history = history;
        inner.composites = composites;
        Ok(())
    }

    /// Writes the snapshot as one JSON document, atomically (temp file in the
    /// same directory, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.snapshot())
            .map_err(|e| FrameworkError::contract(format!("snapshot serialization: {e}")))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)
            .and_then(|()| std::fs::rename(&tmp, path))
            .map_err(|e| FrameworkError::contract(format!("snapshot write failed: {e}")))
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)
            .map_err(|e| FrameworkError::contract(format!("snapshot read failed: {e}")))?;
        let snapshot: RegistrySnapshot = serde_json::from_slice(&bytes)
            .map_err(|e| FrameworkError::contract(format!("corrupt snapshot: {e}")))?;
        self.restore(snapshot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;

    use crate::testutil::descriptor;

    fn registry() -> (Arc<VirtualClock>, Arc<Registry>) {
        let clock = VirtualClock::new(0);
        let registry = Registry::new(clock.clone(), 30_000);
        (clock, registry)
    }

    #[test]
    fn duplicate_live_registration_rejected_expired_allowed() {
        let (clock, registry) = registry();
        let lease = registry.register(descriptor("s1", "weather.temperature.read", 50)).unwrap();
        assert_eq!(lease.epoch, 1);
        assert!(registry.register(descriptor("s1", "weather.temperature.read", 50)).is_err());
        clock.advance_to(30_000);
        let lease = registry.register(descriptor("s1", "weather.temperature.read", 50)).unwrap();
        assert_eq!(lease.epoch, 2);
    }

    #[test]
    fn renew_extends_but_lapsed_renew_fails() {
        let (clock, registry) = registry();
        let lease = registry.register(descriptor("s1", "a.b", 10)).unwrap();
        clock.advance_to(10_000);
        let renewed = registry.renew(&lease).unwrap();
        assert_eq!(renewed.expires_at_ms, 40_000);
        assert_eq!(renewed.epoch, lease.epoch);
        clock.advance_to(40_000);
        assert!(registry.renew(&renewed).is_err());
    }

    #[test]
    fn discover_orders_by_cost_then_id_and_drops_expired() {
        let (clock, registry) = registry();
        registry.register(descriptor("s-b", "weather.temperature.read", 200)).unwrap();
        registry.register(descriptor("s-a", "weather.temperature.read", 50)).unwrap();
        registry.register(descriptor("s-c", "weather.temperature.read", 50)).unwrap();
        let cap = Capability::parse("weather.temperature.read").unwrap();
        let found = registry.discover(&cap, None, false);
        let ids: Vec<&str> = found.iter().map(|d| d.service_id.as_str()).collect();
        assert_eq!(ids, ["s-a", "s-c", "s-b"]);
        clock.advance_to(30_000);
        assert!(registry.discover(&cap, None, false).is_empty());
    }

    #[test]
    fn discover_filters_domain_and_class() {
        let (_clock, registry) = registry();
        let mut away = descriptor("s-away", "weather.temperature.read", 10);
        away.domain = "office".to_string();
        registry.register(away).unwrap();
        let mut hidden = descriptor("s-log", "weather.temperature.read", 5);
        hidden.class = ServiceClass::NonFunctional;
        registry.register(hidden).unwrap();
        registry.register(descriptor("s-home", "weather.temperature.read", 20)).unwrap();
        let cap = Capability::parse("weather.temperature.read").unwrap();
        let home = registry.discover(&cap, Some("home"), false);
        assert_eq!(home.len(), 1);
        assert_eq!(home[0].service_id, "s-home");
        let all = registry.discover(&cap, None, true);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn resolve_equivalent_finds_sibling_not_self() {
        let (_clock, registry) = registry();
        registry.register(descriptor("s-y", "door.lock.actuate", 10)).unwrap();
        registry.register(descriptor("s-z", "door.lock.actuate", 90)).unwrap();
        registry.deregister("s-y");
        let found = registry.resolve_equivalent("s-y").unwrap();
        assert_eq!(found.service_id, "s-z");
        registry.deregister("s-z");
        assert!(registry.resolve_equivalent("s-y").is_err());
    }

    #[test]
    fn resolve_equivalent_requires_schema_coverage() {
        let (_clock, registry) = registry();
        registry.register(descriptor("s-full", "env.read", 10)).unwrap();
        let mut narrow = descriptor("s-narrow", "env.read", 5);
        narrow.output_schema = Schema::default();
        registry.register(narrow).unwrap();
        registry.deregister("s-full");
        // The only live candidate promises nothing, so it cannot stand in.
        assert!(registry.resolve_equivalent("s-full").is_err());
    }

    #[test]
    fn quarantine_hides_from_discovery_but_keeps_lease() {
        let (_clock, registry) = registry();
        registry.register(descriptor("s1", "a.b", 10)).unwrap();
        registry.set_quarantine("s1", true).unwrap();
        let cap = Capability::parse("a.b").unwrap();
        assert!(registry.discover(&cap, None, false).is_empty());
        assert_eq!(registry.entries().len(), 1);
        registry.set_quarantine("s1", false).unwrap();
        assert_eq!(registry.discover(&cap, None, false).len(), 1);
    }

    #[test]
    fn snapshot_round_trip_preserves_discovery() {
        let (_clock, registry) = registry();
        registry.register(descriptor("s1", "a.b", 10)).unwrap();
        registry.register(descriptor("s2", "a.b", 20)).unwrap();
        let snapshot = registry.snapshot();
        let (_c2, other) = tests::registry();
        other.restore(snapshot).unwrap();
        let cap = Capability::parse("a.b").unwrap();
        assert_eq!(registry.discover(&cap, None, false), other.discover(&cap, None, false));
    }

    #[test]
    fn corrupt_snapshot_rejected() {
        let (_clock, registry) = registry();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot.json");
        std::fs::write(&path, b"{\"entries\": [trunc").unwrap();
        assert!(registry.load(&path).is_err());
    }

    #[test]
    fn save_then_load_round_trips_via_file() {
        let (_clock, registry) = registry();
        registry.register(descriptor("s1", "a.b", 10)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot.json");
        registry.save(&path).unwrap();
        let (_c2, other) = tests::registry();
        other.load(&path).unwrap();
        assert_eq!(other.entries().len(), 1);
    }
}
