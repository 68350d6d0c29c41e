//! trellis-core: capability-indexed service fabric for device fleets.
//!
//! The crate is organized around a small canonical data model (capabilities,
//! typed value trees, schemas) and the components that move it around:
//!
//! - [`registry`]: capability-indexed service registry with leases and
//!   equivalent-service resolution for failover
//! - [`codec`]: lossless conversion between the canonical message model and
//!   the JSON/XML wire forms (contract decoupling)
//! - [`assembler`]: composite planning/execution and demand-driven promotion
//! - [`gateway`]: authenticated request entry point with split-call routing
//! - [`monitor`]: health probing, fault classification, circuit breaking
//! - [`audit`]: append-only transaction log with latency statistics
//! - [`bus`]: at-least-once pub/sub with redelivery and dead-lettering
//! - [`sim`]: simulated device fleet, fault injection, and a deterministic
//!   virtual-clock scenario runner
//!
//! Everything time-dependent consults an injected [`clock::Clock`], so the
//! whole stack runs identically under the simulated clock and in wall time.

pub mod assembler;
pub mod audit;
pub mod bus;
pub mod capability;
pub mod clock;
pub mod codec;
pub mod composite;
pub mod config;
pub mod descriptor;
pub mod error;
pub mod gateway;
pub mod ids;
pub mod message;
pub mod monitor;
pub mod registry;
pub mod schema;
pub mod sim;
pub mod stack;
pub mod transport;
pub mod value;

pub use capability::Capability;
pub use error::{ErrorKind, FrameworkError, Result};
pub use message::CanonicalMessage;
pub use value::{CanonicalValue, ValueKind};
