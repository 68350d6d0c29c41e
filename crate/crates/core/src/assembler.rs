//! The service assembler: executes composite services over their members.
//!
//! A composite request fans out to the member services named by its spec.
//! Parallel mode issues every member call at the same instant, so the
//! composite costs as much as its slowest member; chained mode pipes each
//! member's response body into the next call and costs the sum. Demand for
//! a member combination is counted in a sliding window, and combinations
//! requested often enough get promoted to first-class discoverable services.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use crate::audit::{Hop, Outcome};
use crate::clock::Clock;
use crate::codec::Codec;
use crate::composite::{CompositeSpec, ExecMode};
use crate::config::FrameworkConfig;
use crate::descriptor::{Granularity, ServiceClass, ServiceDescriptor, WireFormat};
use crate::error::{FrameworkError, Result};
use crate::message::CanonicalMessage;
use crate::registry::Registry;
use crate::transport::{CallSpec, Transport};
use crate::value::CanonicalValue;

#[derive(Debug, Clone)]
pub struct ExecutionPlan {
    pub spec: CompositeSpec,
    pub resolved: Vec<ServiceDescriptor>,
    pub deadline_ms: u64,
}

/// The full story of one composite execution: the merged response or the
/// error, when it was known, and one hop per member attempt for the audit
/// trail.
#[derive(Debug)]
pub struct Execution {
    pub result: Result<CanonicalMessage>,
    pub completed_at_ms: u64,
    pub hops: Vec<Hop>,
}

/// Point-in-time view of one demand signature's sliding window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandCounter {
    pub signature: String,
    pub count: u32,
    pub window_ms: u64,
    pub threshold: u32,
}

impl DemandCounter {
    pub fn promotable(&self) -> bool {
        self.count >= self.threshold
    }
}

pub struct Assembler {
    clock: Arc<dyn Clock>,
    registry: Arc<Registry>,
    transport: Arc<dyn Transport>,
    codec: Codec,
    /// Extra patience past the deadline, so a late response is observed as
    /// late rather than conflated with silence.
    grace_ms: u64,
    promotion_threshold: u32,
    promotion_window_ms: u64,
    demand: Mutex<HashMap<String, VecDeque<u64>>>,
}

impl Assembler {
    pub fn new(
        clock: Arc<dyn Clock>,
        registry: Arc<Registry>,
        transport: Arc<dyn Transport>,
        config: &FrameworkConfig,
    ) -> Arc<Assembler> {
        Arc::new(Assembler {
            clock,
            registry,
            transport,
            codec: Codec::from_config(config),
            grace_ms: config.probe_interval_ms,
            promotion_threshold: config.promotion_threshold,
            promotion_window_ms: config.promotion_window_ms,
            demand: Mutex::new(HashMap::new()),
        })
    }

    /// Resolves every member to its current best provider. Fails fast when a
    /// member capability has no live provider at all.
    pub fn plan(&self, spec: &CompositeSpec, deadline_ms: u64) -> Result<ExecutionPlan> {
        spec.validate()?;
        let mut resolved = Vec::with_capacity(spec.members.len());
        for member in &spec.members {
            let provider = self
                .registry
                .discover(member, None, false)
                .into_iter()
                .next()
                .ok_or_else(|| {
                    FrameworkError::not_found(format!("no live provider for `{member}`"))
                })?;
            resolved.push(provider);
        }
        Ok(ExecutionPlan { spec: spec.clone(), resolved, deadline_ms })
    }

    /// Runs the plan against the fleet and merges the member responses.
    pub fn execute(&self, plan: &ExecutionPlan, request: &CanonicalMessage) -> Execution {
        let start = self.clock.now_ms();
        let deadline_at = start + plan.deadline_ms;
        let patience_at = deadline_at + self.grace_ms;
        let mut hops = Vec::new();

        let gathered = match plan.spec.mode {
            ExecMode::Parallel => {
                self.run_parallel(plan, request, start, patience_at, &mut hops)
            }
            ExecMode::Chained => self.run_chained(plan, request, start, patience_at, &mut hops),
        };

        let completed_at_ms =
            hops.iter().map(|h| h.end_ms).max().unwrap_or(start).max(start);
        let result = gathered.and_then(|bodies| {
            if completed_at_ms > deadline_at {
                return Err(FrameworkError::timing(format!(
                    "composite finished at {completed_at_ms}ms, deadline was {deadline_at}ms"
                )));
            }
            let body = merge(&plan.spec, &bodies)?;
            Ok(request.reply(completed_at_ms, body))
        });
        Execution { result, completed_at_ms, hops }
    }

    fn run_parallel(
        &self,
        plan: &ExecutionPlan,
        request: &CanonicalMessage,
        start: u64,
        patience_at: u64,
        hops: &mut Vec<Hop>,
    ) -> Result<Vec<CanonicalValue>> {
        let specs: Vec<CallSpec> = plan
            .resolved
            .iter()
            .enumerate()
            .map(|(i, provider)| {
                self.member_call(plan, i, provider, request, request.body.clone(), start, patience_at)
            })
            .collect::<Result<_>>()?;
        let outcomes = self.transport.call_many(&specs);
        let mut bodies = Vec::with_capacity(outcomes.len());
        for (i, (spec, outcome)) in specs.into_iter().zip(outcomes).enumerate() {
            let body = self.settle_member(plan, i, request, spec, outcome, patience_at, hops)?;
            bodies.push(body);
        }
        Ok(bodies)
    }

    fn run_chained(
        &self,
        plan: &ExecutionPlan,
        request: &CanonicalMessage,
        start: u64,
        patience_at: u64,
        hops: &mut Vec<Hop>,
    ) -> Result<Vec<CanonicalValue>> {
        let mut bodies: Vec<CanonicalValue> = Vec::with_capacity(plan.resolved.len());
        let mut issue_at = start;
        for (i, provider) in plan.resolved.iter().enumerate() {
            let input = if i == 0 { request.body.clone() } else { bodies[i - 1].clone() };
            let spec = self.member_call(plan, i, provider, request, input, issue_at, patience_at)?;
            let outcome = self.transport.call(&spec);
            let completed = outcome.completed_at_ms;
            let body = self.settle_member(plan, i, request, spec, outcome, patience_at, hops)?;
            issue_at = hops.last().map(|h| h.end_ms).unwrap_or(completed);
            bodies.push(body);
        }
        Ok(bodies)
    }

    /// Builds the wire call for one member, in the provider's own format.
    #[allow(clippy::too_many_arguments)]
    fn member_call(
        &self,
        plan: &ExecutionPlan,
        index: usize,
        provider: &ServiceDescriptor,
        request: &CanonicalMessage,
        body: CanonicalValue,
        issue_at: u64,
        patience_at: u64,
    ) -> Result<CallSpec> {
        let member = CanonicalMessage {
            message_id: format!("{}:{}", request.message_id, index),
            correlation_id: Some(request.message_id.clone()),
            capability: plan.spec.members[index].clone(),
            issued_at_ms: issue_at,
            headers: request.headers.clone(),
            body,
        };
        let encoded = self.codec.encode(&member, provider.preferred_format)?;
        Ok(CallSpec {
            target: provider.clone(),
            request: encoded,
            issued_at_ms: issue_at,
            timeout_ms: patience_at.saturating_sub(issue_at),
        })
    }

    /// Decodes and checks one member outcome, trying exactly one equivalent
    /// provider if the first attempt failed. Successful bodies are returned;
    /// a hop is recorded per attempt either way.
    #[allow(clippy::too_many_arguments)]
    fn settle_member(
        &self,
        plan: &ExecutionPlan,
        index: usize,
        request: &CanonicalMessage,
        spec: CallSpec,
        outcome: crate::transport::CallOutcome,
        patience_at: u64,
        hops: &mut Vec<Hop>,
    ) -> Result<CanonicalValue> {
        let first = self.check_member(&plan.spec, index, &spec, outcome, hops);
        match first {
            Ok(body) => Ok(body),
            Err(primary) => {
                let failed_id = &spec.target.service_id;
                let Ok(stand_in) = self.registry.resolve_equivalent(failed_id) else {
                    return Err(primary.with_transaction(request.message_id.clone()));
                };
                let retry_at = hops.last().map(|h| h.end_ms).unwrap_or(spec.issued_at_ms);
                let retry = self.member_call(
                    plan,
                    index,
                    &stand_in,
                    request,
                    self.codec.decode(&spec.request)?.body,
                    retry_at,
                    patience_at,
                )?;
                let outcome = self.transport.call(&retry);
                self.check_member(&plan.spec, index, &retry, outcome, hops)
                    .map_err(|e| e.with_transaction(request.message_id.clone()))
            }
        }
    }

    fn check_member(
        &self,
        spec: &CompositeSpec,
        index: usize,
        call: &CallSpec,
        outcome: crate::transport::CallOutcome,
        hops: &mut Vec<Hop>,
    ) -> Result<CanonicalValue> {
        let settled = outcome.result.and_then(|enc| {
            let msg = self.codec.decode(&enc)?;
            call.target.output_schema.validate(&msg.body)?;
            Ok(msg.body)
        });
        hops.push(Hop {
            service_id: call.target.service_id.clone(),
            capability: spec.members[index].clone(),
            start_ms: call.issued_at_ms,
            end_ms: outcome.completed_at_ms,
            outcome: match &settled {
                Ok(_) => Outcome::Ok,
                Err(e) => Outcome::Fault(e.kind),
            },
        });
        settled
    }

    /// Counts one request for a member-combination signature and reports the
    /// window state. Entries older than the window are evicted first.
    pub fn record_demand(&self, signature: &str, now_ms: u64) -> DemandCounter {
        let mut demand = self.demand.lock().unwrap_or_else(|e| e.into_inner());
        let window = demand.entry(signature.to_string()).or_default();
        let horizon = now_ms.saturating_sub(self.promotion_window_ms);
        while window.front().is_some_and(|&t| t < horizon) {
            window.pop_front();
        }
        window.push_back(now_ms);
        DemandCounter {
            signature: signature.to_string(),
            count: window.len() as u32,
            window_ms: self.promotion_window_ms,
            threshold: self.promotion_threshold,
        }
    }

    /// Advertises the composite as a discoverable service once demand has
    /// crossed the threshold. Idempotent: once the descriptor is live,
    /// further calls return None.
    pub fn maybe_promote(
        &self,
        counter: &DemandCounter,
        spec: &CompositeSpec,
    ) -> Result<Option<ServiceDescriptor>> {
        if !counter.promotable() {
            return Ok(None);
        }
        let service_id = promoted_service_id(spec);
        if self.registry.lookup(&service_id).is_some() {
            return Ok(None);
        }
        self.registry.put_composite(spec.clone())?;
        let descriptor = ServiceDescriptor {
            service_id,
            device_id: "assembler".to_string(),
            capability: spec.composite_capability.clone(),
            class: ServiceClass::Functional,
            preferred_format: WireFormat::Json,
            granularity: Granularity::Composite,
            cost_hint_ms: 0,
            input_schema: crate::schema::Schema::default(),
            output_schema: spec.output_schema.clone(),
            domain: String::new(),
            lease_ttl_ms: 86_400_000,
        };
        self.registry.register(descriptor.clone())?;
        log::info!(
            "assembler: promoted composite `{}` after {} requests",
            spec.composite_capability,
            counter.count
        );
        Ok(Some(descriptor))
    }

    /// Demand bookkeeping for one composite request: count it, then promote
    /// if the window says so.
    pub fn note_demand(&self, spec: &CompositeSpec, now_ms: u64) -> Result<Option<ServiceDescriptor>> {
        let counter = self.record_demand(&spec.signature(), now_ms);
        self.maybe_promote(&counter, spec)
    }
}

pub fn promoted_service_id(spec: &CompositeSpec) -> String {
    format!("svc-composite-{}", spec.composite_capability)
}

/// Builds the composite body: exactly the merge_map image, nothing else.
fn merge(spec: &CompositeSpec, bodies: &[CanonicalValue]) -> Result<CanonicalValue> {
    let mut out = BTreeMap::new();
    for entry in &spec.merge_map {
        let body = &bodies[entry.member];
        let map = body.as_map().ok_or_else(|| {
            FrameworkError::contract(format!(
                "member {} returned a {} body, merge needs a map",
                entry.member,
                body.kind()
            ))
        })?;
        let value = map.get(&entry.from).ok_or_else(|| {
            FrameworkError::contract(format!(
                "member {} output lacks field `{}`",
                entry.member, entry.from
            ))
        })?;
        out.insert(entry.to.clone(), value.clone());
    }
    Ok(CanonicalValue::Map(out))
}
