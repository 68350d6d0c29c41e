//! The southbound seam: how the framework talks to devices.
//!
//! Implementations do not block for simulated latency. A call returns the
//! provider's answer together with the time at which it completed, so the
//! same code path works against the wall clock and against a virtual clock
//! where "waiting" is just arithmetic. Callers that fan out issue every spec
//! with the same `issued_at_ms` and take the max of the completion times;
//! callers that chain feed each completion time into the next call.

use crate::codec::EncodedMessage;
use crate::descriptor::ServiceDescriptor;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct CallSpec {
    pub target: ServiceDescriptor,
    pub request: EncodedMessage,
    pub issued_at_ms: u64,
    pub timeout_ms: u64,
}

#[derive(Debug)]
pub struct CallOutcome {
    pub result: Result<EncodedMessage>,
    /// When the outcome (answer or failure) became known to the caller.
    pub completed_at_ms: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeOutcome {
    pub ok: bool,
    /// True when the failure was an active refusal rather than silence.
    pub connection_refused: bool,
    pub completed_at_ms: u64,
}

pub trait Transport: Send + Sync {
    fn call(&self, spec: &CallSpec) -> CallOutcome;

    /// Issues several independent calls. Outcomes are computed per spec;
    /// since nothing blocks, evaluating them in order preserves the timing
    /// each spec's `issued_at_ms` implies.
    fn call_many(&self, specs: &[CallSpec]) -> Vec<CallOutcome> {
        specs.iter().map(|spec| self.call(spec)).collect()
    }

    /// Liveness ping, cheaper than a full call and independent of request
    /// handling, so a device that drops requests can still answer probes.
    fn probe(&self, service_id: &str, issued_at_ms: u64) -> ProbeOutcome;
}
