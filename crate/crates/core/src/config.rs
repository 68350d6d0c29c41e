//! Tunable framework parameters, gathered in one place with their defaults.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameworkConfig {
    /// Lease granted to descriptors that do not request their own TTL.
    pub default_lease_ttl_ms: u64,
    /// Deadline applied when a consumer contract omits one.
    pub default_deadline_ms: u64,
    /// Composite promotion: this many identical demand signatures...
    pub promotion_threshold: u32,
    /// ...within this window advertise the composite as a service.
    pub promotion_window_ms: u64,
    /// Health probe cadence.
    pub probe_interval_ms: u64,
    /// Consecutive probe failures that open a breaker.
    pub failure_threshold: u32,
    /// Probe intervals an open breaker waits before a half-open trial.
    pub cooldown_intervals: u32,
    /// Probe intervals examined for flap detection.
    pub flap_window_intervals: u32,
    /// Probe state transitions within the flap window that mark a service
    /// as transiently faulty.
    pub flap_transitions: u32,
    /// Unacked bus deliveries are retried after this long.
    pub redelivery_timeout_ms: u64,
    /// Delivery attempts before a bus message is dead-lettered.
    pub max_delivery_attempts: u32,
    /// Hard cap on encoded message size.
    pub max_encoded_bytes: usize,
    /// Hard cap on value tree nesting.
    pub max_value_depth: usize,
    /// Audit log segment rotation boundary, in records.
    pub audit_rotate_records: u64,
    /// Gateway auth: token -> consumer id.
    pub tokens: BTreeMap<String, String>,
}

impl Default for FrameworkConfig {
    fn default() -> FrameworkConfig {
        FrameworkConfig {
            default_lease_ttl_ms: 30_000,
            default_deadline_ms: 1_000,
            promotion_threshold: 10,
            promotion_window_ms: 60_000,
            probe_interval_ms: 1_000,
            failure_threshold: 3,
            cooldown_intervals: 5,
            flap_window_intervals: 10,
            flap_transitions: 2,
            redelivery_timeout_ms: 2_000,
            max_delivery_attempts: 5,
            max_encoded_bytes: 1 << 20,
            max_value_depth: crate::value::MAX_DEPTH,
            audit_rotate_records: 10_000,
            tokens: BTreeMap::new(),
        }
    }
}
