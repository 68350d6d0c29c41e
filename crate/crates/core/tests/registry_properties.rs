//! Property coverage for the registry: discovery ordering and filtering over
//! randomized fleets, and snapshot persistence.

use std::collections::BTreeSet;

use proptest::prelude::*;

use trellis_core::capability::Capability;
use trellis_core::clock::VirtualClock;
use trellis_core::descriptor::{
    Granularity, ServiceClass, ServiceDescriptor, WireFormat,
};
use trellis_core::registry::Registry;
use trellis_core::schema::Schema;
use trellis_core::value::ValueKind;

const CAPS: [&str; 3] = ["env.temperature", "env.humidity", "lighting.lamp"];
const TTL: u64 = 60_000;

#[derive(Debug, Clone)]
struct Entry {
    cap_index: usize,
    cost: u32,
    functional: bool,
    domain: &'static str,
}

fn entry_strategy() -> impl Strategy<Value = Entry> {
    (0..CAPS.len(), 0u32..5_000, any::<bool>(), prop::sample::select(vec!["home", "lab"]))
        .prop_map(|(cap_index, cost, functional, domain)| Entry {
            cap_index,
            cost,
            functional,
            domain,
        })
}

fn descriptor(i: usize, entry: &Entry) -> ServiceDescriptor {
    ServiceDescriptor {
        service_id: format!("svc-{i:03}"),
        device_id: format!("dev-{i:03}"),
        capability: Capability::parse(CAPS[entry.cap_index]).expect("capability parses"),
        class: if entry.functional { ServiceClass::Functional } else { ServiceClass::NonFunctional },
        preferred_format: WireFormat::Json,
        granularity: Granularity::Atomic,
        cost_hint_ms: entry.cost,
        input_schema: Schema::default(),
        output_schema: Schema::new([("value".to_string(), ValueKind::Float)]),
        domain: entry.domain.to_string(),
        lease_ttl_ms: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn discovery_returns_exactly_the_matching_live_providers_cheapest_first(
        entries in prop::collection::vec(entry_strategy(), 0..24),
        probe_cap in 0..CAPS.len(),
    ) {
        let clock = VirtualClock::new(1_000);
        let registry = Registry::new(clock.clone(), TTL);
        for (i, entry) in entries.iter().enumerate() {
            registry.register(descriptor(i, entry)).expect("registers");
        }
        let capability = Capability::parse(CAPS[probe_cap]).expect("capability parses");

        let hits = registry.discover(&capability, None, false);

        // Exactly the functional providers of that capability, no more.
        let expected: BTreeSet<String> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.cap_index == probe_cap && e.functional)
            .map(|(i, _)| format!("svc-{i:03}"))
            .collect();
        let got: BTreeSet<String> = hits.iter().map(|d| d.service_id.clone()).collect();
        prop_assert_eq!(got, expected);

        // Cheapest first, service_id breaking ties, so selection is stable.
        for pair in hits.windows(2) {
            prop_assert!(
                (pair[0].cost_hint_ms, &pair[0].service_id)
                    < (pair[1].cost_hint_ms, &pair[1].service_id)
            );
        }

        // Domain scoping only narrows, never invents.
        let home = registry.discover(&capability, Some("home"), false);
        prop_assert!(home.iter().all(|d| d.domain == "home"));
        prop_assert!(home.len() <= hits.len());
    }

    #[test]
    fn snapshots_survive_a_save_load_cycle(
        entries in prop::collection::vec(entry_strategy(), 0..16),
    ) {
        let clock = VirtualClock::new(1_000);
        let registry = Registry::new(clock.clone(), TTL);
        for (i, entry) in entries.iter().enumerate() {
            registry.register(descriptor(i, entry)).expect("registers");
        }
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("registry.json");
        registry.save(&path).expect("saves");

        let restored = Registry::new(clock, TTL);
        restored.load(&path).expect("loads");

        prop_assert_eq!(restored.entries(), registry.entries());
        for cap_name in CAPS {
            let capability = Capability::parse(cap_name).expect("capability parses");
            prop_assert_eq!(
                restored.discover(&capability, None, true),
                registry.discover(&capability, None, true)
            );
        }
    }

    #[test]
    fn expired_leases_drop_out_of_discovery(
        entries in prop::collection::vec(entry_strategy(), 1..12),
        elapsed in 0u64..(2 * TTL),
    ) {
        let clock = VirtualClock::new(0);
        let registry = Registry::new(clock.clone(), TTL);
        for (i, entry) in entries.iter().enumerate() {
            registry.register(descriptor(i, entry)).expect("registers");
        }
        clock.advance_to(elapsed);
        let live = registry.entries().len();
        if elapsed < TTL {
            prop_assert_eq!(live, entries.len());
        } else {
            prop_assert_eq!(live, 0);
        }
    }
}
