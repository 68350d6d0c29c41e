//! Service descriptors: what a device tells the registry about a service.

use serde::{Deserialize, Serialize};

use crate::capability::Capability;
use crate::error::{FrameworkError, Result};
use crate::schema::Schema;

/// Whether the service is part of the public surface. Non-functional
/// services (logging, self-test, battery telemetry) register so the platform
/// can reach them, but the gateway never exposes them to consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceClass {
    Functional,
    NonFunctional,
}

/// The wire format a provider prefers to speak. The codec makes the choice
/// invisible to consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireFormat {
    Json,
    Xml,
}

impl WireFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            WireFormat::Json => "json",
            WireFormat::Xml => "xml",
        }
    }
}

/// Atomic services map to one device call. Composite services fan out to
/// members through the assembler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Atomic,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_id: String,
    pub device_id: String,
    pub capability: Capability,
    pub class: ServiceClass,
    pub preferred_format: WireFormat,
    pub granularity: Granularity,
    /// Advertised typical latency, used to order discovery results.
    pub cost_hint_ms: u32,
    /// Contract for the request body. Often empty for plain reads.
    #[serde(default)]
    pub input_schema: Schema,
    /// Contract for the response body. May be empty for fire-and-forget
    /// actuators.
    #[serde(default)]
    pub output_schema: Schema,
    /// Deployment domain tag, e.g. `home` or `office`. Free-form.
    #[serde(default)]
    pub domain: String,
    /// Requested lease duration. Zero means "use the registry default".
    #[serde(default)]
    pub lease_ttl_ms: u64,
}

impl ServiceDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.service_id.is_empty() {
            return Err(FrameworkError::contract("service_id must not be empty"));
        }
        if self.device_id.is_empty() {
            return Err(FrameworkError::contract("device_id must not be empty"));
        }
        Ok(())
    }
}

/// A descriptor plus the registry's lease bookkeeping, as returned by
/// snapshots and discovery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisteredService {
    #[serde(flatten)]
    pub descriptor: ServiceDescriptor,
    /// When the current lease was granted or last renewed.
    pub lease_renewed_at_ms: u64,
    /// When the lease lapses if not renewed.
    pub lease_expires_at_ms: u64,
    /// Bumped every time this service_id re-registers after expiry or
    /// deregistration, so stale references are detectable.
    pub epoch: u64,
    /// Set while the monitor holds the service out of rotation.
    pub quarantined: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&WireFormat::Xml).unwrap(), "\"xml\"");
        assert_eq!(serde_json::to_string(&ServiceClass::NonFunctional).unwrap(), "\"non_functional\"");
    }
}
