//! trellis-net: the socket adapters around trellis-core.
//!
//! Two wire protocols, each implemented exactly once:
//!
//! - [`rest`] over [`http`]: a request/response wire where
//!   `POST /svc/<capability>` runs one gateway transaction and the other
//!   routes expose registry, health, audit, composite, and split state
//! - [`pubsub`]: newline-delimited JSON frames carrying bus publishes,
//!   subscriptions, acks, and event deliveries
//!
//! [`binding`] owns the listening sockets and the start/stop/drain
//! lifecycle, [`node`] assembles a complete served instance, and
//! [`client`] is the blocking HTTP client the command-line tools use. Both
//! wire framings are specified byte for byte in `docs/wire-formats.md`.

pub mod binding;
pub mod client;
pub mod http;
pub mod node;
pub mod pubsub;
pub mod rest;
pub mod status;

pub use binding::{Binding, LifecycleState, Protocol};
pub use client::HttpClient;
pub use node::Node;
pub use pubsub::PubSubSession;
pub use rest::RestAdapter;
pub use status::{recover_error, status_of, ERROR_KIND_HEADER};
