//! The intelligent API layer: the single front door for consumers.
//!
//! Every consumer request flows through the same sequence: authenticate,
//! decode to canonical form, resolve the capability to whoever currently
//! provides it, validate the response against the provider's schema, and
//! re-encode in whatever format the consumer's contract names. Consumers
//! never learn which device answered, what format it speaks, or whether the
//! capability is one service or a composite of several. That indirection is
//! what lets providers be split, merged, or replaced without touching a
//! single consumer contract.
//!
//! The gateway is also where the non-functional services hook in: it feeds
//! request evidence to the monitor and writes one audit record per
//! transaction. Consumers cannot call those services; they run on the
//! gateway's own authority.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::assembler::Assembler;
use crate::audit::{AuditRecord, Auditor, Hop, Outcome};
use crate::capability::Capability;
use crate::clock::Clock;
use crate::codec::{Codec, EncodedMessage};
use crate::composite::{CompositeSpec, ExecMode, MergeEntry};
use crate::config::FrameworkConfig;
use crate::descriptor::{Granularity, ServiceDescriptor, WireFormat};
use crate::error::{ErrorKind, FrameworkError, Result};
use crate::ids::IdGen;
use crate::message::CanonicalMessage;
use crate::monitor::{Monitor, Symptoms};
use crate::registry::Registry;
use crate::schema::Schema;
use crate::transport::{CallSpec, Transport};

/// What one consumer agreed with the platform: who they are, what they may
/// ask for, how they want answers shaped, and how long they will wait.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerContract {
    pub consumer_id: String,
    pub capability: Capability,
    pub accepted_format: WireFormat,
    pub deadline_ms: u64,
    pub auth_token: String,
}

impl ConsumerContract {
    pub fn validate(&self) -> Result<()> {
        if self.consumer_id.is_empty() {
            return Err(FrameworkError::contract("contract has empty consumer_id"));
        }
        if self.deadline_ms == 0 {
            return Err(FrameworkError::contract("contract deadline must be positive"));
        }
        Ok(())
    }
}

/// A provider-side refactoring rule: requests for the coarse capability are
/// answered by fanning out to the finer services it was dismantled into.
/// The consumer's contract for the coarse capability stays untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMapping {
    pub coarse: Capability,
    pub fines: Vec<Capability>,
    #[serde(rename = "merge")]
    pub merge_map: Vec<MergeEntry>,
}

impl SplitMapping {
    pub fn validate(&self) -> Result<()> {
        if self.fines.contains(&self.coarse) {
            return Err(FrameworkError::contract(format!(
                "split mapping for `{}` names itself as a fine",
                self.coarse
            )));
        }
        self.as_spec().validate()
    }

    /// A split is executed exactly like an unadvertised parallel composite.
    pub fn as_spec(&self) -> CompositeSpec {
        CompositeSpec {
            composite_capability: self.coarse.clone(),
            members: self.fines.clone(),
            merge_map: self.merge_map.clone(),
            mode: ExecMode::Parallel,
            output_schema: Schema::default(),
        }
    }
}

/// Everything known about one routed request before the consumer-format
/// encode: outcome, per-attempt hops, and when the answer was in hand.
struct Routed {
    result: Result<CanonicalMessage>,
    hops: Vec<Hop>,
    completed_at_ms: u64,
    correlation_id: Option<String>,
}

pub struct Gateway {
    clock: Arc<dyn Clock>,
    registry: Arc<Registry>,
    transport: Arc<dyn Transport>,
    assembler: Arc<Assembler>,
    monitor: Arc<Monitor>,
    auditor: Arc<Auditor>,
    codec: Codec,
    grace_ms: u64,
    tokens: BTreeMap<String, String>,
    splits: Mutex<BTreeMap<String, Arc<SplitMapping>>>,
    txn_ids: IdGen,
}

impl Gateway {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        clock: Arc<dyn Clock>,
        registry: Arc<Registry>,
        transport: Arc<dyn Transport>,
        assembler: Arc<Assembler>,
        monitor: Arc<Monitor>,
        auditor: Arc<Auditor>,
        config: &FrameworkConfig,
    ) -> Arc<Gateway> {
        Arc::new(Gateway {
            clock,
            registry,
            transport,
            assembler,
            monitor,
            auditor,
            codec: Codec::from_config(config),
            grace_ms: config.probe_interval_ms,
            tokens: config.tokens.clone(),
            splits: Mutex::new(BTreeMap::new()),
            txn_ids: IdGen::new("txn"),
        })
    }

    /// Resolves a token to the consumer it was issued to. The whole table is
    /// scanned and every comparison runs over the full token length, so the
    /// time taken reveals nothing about where a guess diverged.
    pub fn authenticate(&self, token: &str) -> Result<String> {
        let mut matched: Option<&str> = None;
        for (candidate, consumer_id) in &self.tokens {
            if constant_time_eq(candidate.as_bytes(), token.as_bytes()) {
                matched = Some(consumer_id);
            }
        }
        matched
            .map(str::to_string)
            .ok_or_else(|| FrameworkError::unauthorised("unknown or missing token"))
    }

    /// Installs (or replaces) the split rule for a coarse capability. The
    /// table swap happens under one lock, so every request sees exactly one
    /// mapping version, never a blend.
    pub fn register_split(&self, mapping: SplitMapping) -> Result<()> {
        mapping.validate()?;
        let key = mapping.coarse.to_string();
        self.splits.lock().unwrap_or_else(|e| e.into_inner()).insert(key, Arc::new(mapping));
        Ok(())
    }

    fn split_for(&self, capability: &Capability) -> Option<Arc<SplitMapping>> {
        self.splits
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&capability.to_string())
            .cloned()
    }

    /// The front door. Always answers, always audits: exactly one audit
    /// record is written whether the request succeeded, failed, or never got
    /// past the token check.
    pub fn handle_request(
        &self,
        contract: &ConsumerContract,
        payload: &EncodedMessage,
    ) -> Result<EncodedMessage> {
        let arrived = self.clock.now_ms();
        let mut routed = self.route(contract, payload, arrived);
        self.feed_monitor(contract, &mut routed, arrived);

        let result = routed.result.and_then(|mut response| {
            response.correlation_id = routed.correlation_id.clone();
            self.codec.encode(&response, contract.accepted_format)
        });

        let responded = routed.completed_at_ms.max(arrived);
        let final_outcome = match &result {
            Ok(_) => Outcome::Ok,
            Err(e) => Outcome::Fault(e.kind),
        };
        let mut hops = vec![Hop {
            service_id: "gateway".to_string(),
            capability: contract.capability.clone(),
            start_ms: arrived,
            end_ms: responded,
            outcome: final_outcome.clone(),
        }];
        hops.extend(routed.hops);
        let transaction_id = self.txn_ids.next();
        let record = AuditRecord {
            // Requests that never decoded have no message id to correlate
            // on; the record then correlates only with itself.
            correlation_id: routed.correlation_id.unwrap_or_else(|| transaction_id.clone()),
            transaction_id,
            consumer_id: contract.consumer_id.clone(),
            hops,
            total_ms: responded - arrived,
            final_outcome,
        };
        if let Err(e) = self.auditor.append(record) {
            log::error!("gateway: audit append failed: {e}");
        }
        result
    }

    /// Steps 1-4 of the request sequence; encoding to the consumer format is
    /// left to the caller so the audit record can see the final outcome.
    fn route(&self, contract: &ConsumerContract, payload: &EncodedMessage, arrived: u64) -> Routed {
        let mut routed = Routed {
            result: Err(FrameworkError::not_found("unresolved")),
            hops: Vec::new(),
            completed_at_ms: arrived,
            correlation_id: None,
        };

        if let Err(e) = self
            .authenticate(&contract.auth_token)
            .and_then(|authenticated| {
                if authenticated == contract.consumer_id {
                    Ok(())
                } else {
                    Err(FrameworkError::unauthorised(format!(
                        "token was not issued to `{}`",
                        contract.consumer_id
                    )))
                }
            })
            .and_then(|()| contract.validate())
        {
            routed.result = Err(e);
            return routed;
        }

        let request = match self.codec.decode(payload) {
            Ok(msg) => msg,
            Err(e) => {
                routed.result = Err(e);
                return routed;
            }
        };
        routed.correlation_id = Some(request.message_id.clone());
        if request.capability != contract.capability {
            routed.result = Err(FrameworkError::contract(format!(
                "payload capability `{}` does not match contract `{}`",
                request.capability, contract.capability
            )));
            return routed;
        }
        let request = CanonicalMessage { issued_at_ms: arrived, ..request };

        if let Some(mapping) = self.split_for(&contract.capability) {
            return self.run_composite(&mapping.as_spec(), contract, &request, routed);
        }
        let providers = self.registry.discover(&contract.capability, None, false);
        if let Some(provider) = providers.into_iter().next() {
            if provider.granularity == Granularity::Composite {
                let Some(spec) = self.registry.composite(&contract.capability) else {
                    routed.result = Err(FrameworkError::not_found(format!(
                        "composite spec for `{}` is missing",
                        contract.capability
                    )));
                    return routed;
                };
                return self.run_composite(&spec, contract, &request, routed);
            }
            return self.run_direct(provider, contract, &request, arrived, routed);
        }
        if let Some(spec) = self.registry.composite(&contract.capability) {
            return self.run_composite(&spec, contract, &request, routed);
        }
        routed.result = Err(FrameworkError::not_found(format!(
            "no provider or mapping for `{}`",
            contract.capability
        )));
        routed
    }

    fn run_composite(
        &self,
        spec: &CompositeSpec,
        contract: &ConsumerContract,
        request: &CanonicalMessage,
        mut routed: Routed,
    ) -> Routed {
        let plan = match self.assembler.plan(spec, contract.deadline_ms) {
            Ok(plan) => plan,
            Err(e) => {
                routed.result = Err(e);
                return routed;
            }
        };
        if let Err(e) = self.assembler.note_demand(spec, request.issued_at_ms) {
            log::error!("gateway: promotion bookkeeping failed: {e}");
        }
        let execution = self.assembler.execute(&plan, request);
        routed.hops = execution.hops;
        routed.completed_at_ms = execution.completed_at_ms;
        routed.result = execution.result.and_then(|response| {
            spec.output_schema.validate(&response.body)?;
            Ok(response)
        });
        routed
    }

    fn run_direct(
        &self,
        provider: ServiceDescriptor,
        contract: &ConsumerContract,
        request: &CanonicalMessage,
        arrived: u64,
        mut routed: Routed,
    ) -> Routed {
        let deadline_at = arrived + contract.deadline_ms;
        let patience_at = deadline_at + self.grace_ms;

        if let Err(e) = provider.input_schema.validate(&request.body) {
            routed.result = Err(e);
            return routed;
        }

        let first = self.attempt(&provider, request, arrived, patience_at, &mut routed.hops);
        let settled = match first {
            Ok(response) => Ok(response),
            Err(primary) => match self.registry.resolve_equivalent(&provider.service_id) {
                Ok(stand_in) => {
                    let retry_at = routed.hops.last().map(|h| h.end_ms).unwrap_or(arrived);
                    self.attempt(&stand_in, request, retry_at, patience_at, &mut routed.hops)
                }
                Err(_) => Err(primary),
            },
        };
        routed.completed_at_ms =
            routed.hops.iter().map(|h| h.end_ms).max().unwrap_or(arrived).max(arrived);
        routed.result = settled
            .and_then(|response| {
                if routed.completed_at_ms > deadline_at {
                    return Err(FrameworkError::timing(format!(
                        "response at {}ms missed the {}ms deadline",
                        routed.completed_at_ms, deadline_at
                    )));
                }
                Ok(response)
            })
            .map_err(|e| e.with_transaction(request.message_id.clone()));
        routed
    }

    /// One call to one provider, in the provider's preferred format, with
    /// the response checked against the provider's declared schema.
    fn attempt(
        &self,
        provider: &ServiceDescriptor,
        request: &CanonicalMessage,
        issue_at: u64,
        patience_at: u64,
        hops: &mut Vec<Hop>,
    ) -> Result<CanonicalMessage> {
        let forwarded = CanonicalMessage { issued_at_ms: issue_at, ..request.clone() };
        let encoded = self.codec.encode(&forwarded, provider.preferred_format)?;
        let outcome = self.transport.call(&CallSpec {
            target: provider.clone(),
            request: encoded,
            issued_at_ms: issue_at,
            timeout_ms: patience_at.saturating_sub(issue_at),
        });
        let settled = outcome.result.and_then(|enc| {
            let response = self.codec.decode(&enc)?;
            provider.output_schema.validate(&response.body)?;
            Ok(response)
        });
        hops.push(Hop {
            service_id: provider.service_id.clone(),
            capability: provider.capability.clone(),
            start_ms: issue_at,
            end_ms: outcome.completed_at_ms,
            outcome: match &settled {
                Ok(_) => Outcome::Ok,
                Err(e) => Outcome::Fault(e.kind),
            },
        });
        settled
    }

    /// Turns the request's provider evidence into monitor observations, and
    /// folds what the monitor knows back into the final error kind: a crash
    /// or omission against a service the monitor has seen flapping is
    /// reported to the consumer as the transient fault it is.
    fn feed_monitor(&self, contract: &ConsumerContract, routed: &mut Routed, arrived: u64) {
        let deadline_at = arrived + contract.deadline_ms;
        let mut last_faulty: Option<String> = None;
        for hop in &routed.hops {
            match &hop.outcome {
                Outcome::Ok if hop.end_ms > deadline_at => {
                    self.monitor.observe(
                        &hop.service_id,
                        Symptoms { deadline_exceeded: true, ..Symptoms::healthy() },
                    );
                }
                Outcome::Ok => {}
                Outcome::Fault(kind) => {
                    let symptoms = match kind {
                        ErrorKind::CrashFailure => {
                            Some(Symptoms { connection_refused: true, ..Symptoms::healthy() })
                        }
                        ErrorKind::OmissionFailure => {
                            Some(Symptoms { request_timed_out: true, ..Symptoms::healthy() })
                        }
                        ErrorKind::TimingFault => {
                            Some(Symptoms { deadline_exceeded: true, ..Symptoms::healthy() })
                        }
                        _ => None,
                    };
                    if let Some(symptoms) = symptoms {
                        self.monitor.observe(&hop.service_id, symptoms);
                    }
                    last_faulty = Some(hop.service_id.clone());
                }
            }
        }
        if let (Err(e), Some(service_id)) = (&mut routed.result, last_faulty) {
            e.kind = self.monitor.refine_kind(&service_id, e.kind);
        }
    }
}

/// Byte-wise equality that always walks the longer input's full length.
fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    let mut diff = a.len() ^ b.len();
    for i in 0..a.len().max(b.len()) {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        diff |= usize::from(x ^ y);
    }
    diff == 0
}
