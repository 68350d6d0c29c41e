//! The internal event bus: topic-based publish/subscribe with at-least-once
//! delivery.
//!
//! Topics are dotted paths in the capability grammar. Subscriptions may end
//! in `.*` (exactly one extra segment) or `.#` (the topic itself or any
//! depth below it). Deliveries are pulled: a subscriber polls, works, and
//! acks. A delivery that is not acked within the redelivery timeout is
//! handed out again with a bumped attempt counter, and after the attempt
//! budget is spent the payload moves to the `bus.deadletter` topic. Callers
//! that need exactly-once observation wrap their subscription in
//! [`Deduped`].

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use crate::capability::check_segment;
use crate::clock::Clock;
use crate::error::{FrameworkError, Result};
use crate::message::CanonicalMessage;

pub const DEAD_LETTER_TOPIC: &str = "bus.deadletter";

/// A subscription pattern: concrete segments, optionally ending in a
/// single-level (`*`) or multi-level (`#`) wildcard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    head: Vec<String>,
    tail: Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tail {
    Exact,
    OneLevel,
    AnyDepth,
}

impl Pattern {
    pub fn parse(pattern: &str) -> Result<Pattern> {
        let mut segments: Vec<&str> = pattern.split('.').collect();
        let tail = match segments.last() {
            Some(&"*") => {
                segments.pop();
                Tail::OneLevel
            }
            Some(&"#") => {
                segments.pop();
                Tail::AnyDepth
            }
            _ => Tail::Exact,
        };
        if segments.is_empty() {
            return Err(FrameworkError::contract(format!(
                "pattern `{pattern}` needs at least one concrete segment"
            )));
        }
        for segment in &segments {
            check_segment(segment).map_err(|e| {
                FrameworkError::contract(format!("bad pattern `{pattern}`: {}", e.detail))
            })?;
        }
        Ok(Pattern { head: segments.into_iter().map(str::to_string).collect(), tail })
    }

    pub fn matches(&self, topic: &str) -> bool {
        let segments: Vec<&str> = topic.split('.').collect();
        if segments.len() < self.head.len() {
            return false;
        }
        if !self.head.iter().zip(&segments).all(|(h, s)| h == s) {
            return false;
        }
        let extra = segments.len() - self.head.len();
        match self.tail {
            Tail::Exact => extra == 0,
            Tail::OneLevel => extra == 1,
            Tail::AnyDepth => true,
        }
    }
}

/// Checks a concrete publishable topic: capability grammar, no wildcards.
pub fn check_topic(topic: &str) -> Result<()> {
    if topic.is_empty() {
        return Err(FrameworkError::contract("topic must not be empty"));
    }
    for segment in topic.split('.') {
        if segment == "*" || segment == "#" {
            return Err(FrameworkError::contract(format!(
                "topic `{topic}` contains a wildcard; publish needs a concrete topic"
            )));
        }
        check_segment(segment)
            .map_err(|e| FrameworkError::contract(format!("bad topic `{topic}`: {}", e.detail)))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusEvent {
    pub delivery_id: String,
    pub topic: String,
    pub payload: CanonicalMessage,
    pub attempt: u32,
}

#[derive(Debug)]
struct Inflight {
    event: BusEvent,
    redeliver_at_ms: u64,
}

#[derive(Debug, Default)]
struct SubState {
    pattern: Option<Pattern>,
    pending: VecDeque<BusEvent>,
    inflight: BTreeMap<String, Inflight>,
}

struct Inner {
    subs: BTreeMap<u64, SubState>,
    next_sub: u64,
    next_delivery: u64,
}

pub struct Bus {
    clock: Arc<dyn Clock>,
    redelivery_timeout_ms: u64,
    max_attempts: u32,
    inner: Mutex<Inner>,
}

impl Bus {
    pub fn new(clock: Arc<dyn Clock>, redelivery_timeout_ms: u64, max_attempts: u32) -> Arc<Bus> {
        Arc::new(Bus {
            clock,
            redelivery_timeout_ms,
            max_attempts,
            inner: Mutex::new(Inner { subs: BTreeMap::new(), next_sub: 1, next_delivery: 1 }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn subscribe(self: &Arc<Self>, pattern: &str) -> Result<Subscription> {
        let pattern = Pattern::parse(pattern)?;
        let mut inner = self.lock();
        let id = inner.next_sub;
        inner.next_sub += 1;
        inner.subs.insert(id, SubState { pattern: Some(pattern), ..SubState::default() });
        Ok(Subscription { bus: Arc::clone(self), id })
    }

    pub fn publish(&self, topic: &str, payload: CanonicalMessage) -> Result<String> {
        check_topic(topic)?;
        let mut inner = self.lock();
        let delivery_id = format!("d-{:06}", inner.next_delivery);
        inner.next_delivery += 1;
        Self::fan_out(&mut inner, topic, payload, &delivery_id);
        Ok(delivery_id)
    }

    fn fan_out(inner: &mut Inner, topic: &str, payload: CanonicalMessage, delivery_id: &str) {
        for sub in inner.subs.values_mut() {
            let matches = sub.pattern.as_ref().is_some_and(|p| p.matches(topic));
            if matches {
                sub.pending.push_back(BusEvent {
                    delivery_id: delivery_id.to_string(),
                    topic: topic.to_string(),
                    payload: payload.clone(),
                    attempt: 1,
                });
            }
        }
    }

    /// Returns the next event for a subscriber, redeliveries first. `None`
    /// means nothing is currently due.
    fn poll(&self, sub_id: u64) -> Option<BusEvent> {
        let now = self.clock.now_ms();
        let mut inner = self.lock();
        self.requeue_expired(&mut inner, sub_id, now);
        let sub = inner.subs.get_mut(&sub_id)?;
        let event = sub.pending.pop_front()?;
        sub.inflight.insert(
            event.delivery_id.clone(),
            Inflight { event: event.clone(), redeliver_at_ms: now + self.redelivery_timeout_ms },
        );
        Some(event)
    }

    /// Moves expired inflight deliveries back to the front of the pending
    /// queue (publish order preserved among them), dead-lettering those that
    /// have spent their attempt budget.
    fn requeue_expired(&self, inner: &mut Inner, sub_id: u64, now_ms: u64) {
        let Some(sub) = inner.subs.get_mut(&sub_id) else { return };
        let expired: Vec<String> = sub
            .inflight
            .iter()
            .filter(|(_, inflight)| inflight.redeliver_at_ms <= now_ms)
            .map(|(id, _)| id.clone())
            .collect();
        let mut dead = Vec::new();
        for id in expired.iter().rev() {
            let mut inflight = sub.inflight.remove(id).expect("expired id present");
            if inflight.event.attempt >= self.max_attempts {
                dead.push(inflight.event);
            } else {
                inflight.event.attempt += 1;
                sub.pending.push_front(inflight.event);
            }
        }
        for event in dead {
            if event.topic != DEAD_LETTER_TOPIC {
                let delivery_id = format!("d-{:06}", inner.next_delivery);
                inner.next_delivery += 1;
                Self::fan_out(inner, DEAD_LETTER_TOPIC, event.payload, &delivery_id);
            }
        }
    }

    fn ack(&self, sub_id: u64, delivery_id: &str) -> Result<()> {
        let mut inner = self.lock();
        let sub = inner
            .subs
            .get_mut(&sub_id)
            .ok_or_else(|| FrameworkError::not_found("unknown subscription"))?;
        sub.inflight
            .remove(delivery_id)
            .map(|_| ())
            .ok_or_else(|| FrameworkError::not_found(format!("no outstanding delivery `{delivery_id}`")))
    }

    fn unsubscribe(&self, sub_id: u64) {
        self.lock().subs.remove(&sub_id);
    }
}

/// Handle to one subscriber's ordered event stream.
pub struct Subscription {
    bus: Arc<Bus>,
    id: u64,
}

impl Subscription {
    pub fn poll(&self) -> Option<BusEvent> {
        self.bus.poll(self.id)
    }

    /// Confirms a delivery so it is never redelivered. Acking twice, or
    /// acking an unknown id, reports NotFound.
    pub fn ack(&self, delivery_id: &str) -> Result<()> {
        self.bus.ack(self.id, delivery_id)
    }

    pub fn unsubscribe(self) {
        self.bus.unsubscribe(self.id);
    }
}

/// Exactly-once view over an at-least-once subscription: redelivered
/// duplicates of an already observed delivery_id are acked and skipped.
pub struct Deduped {
    sub: Subscription,
    seen: HashSet<String>,
}

impl Deduped {
    pub fn new(sub: Subscription) -> Deduped {
        Deduped { sub, seen: HashSet::new() }
    }

    pub fn poll(&mut self) -> Option<BusEvent> {
        while let Some(event) = self.sub.poll() {
            if self.seen.contains(&event.delivery_id) {
                let _ = self.sub.ack(&event.delivery_id);
                continue;
            }
            self.seen.insert(event.delivery_id.clone());
            return Some(event);
        }
        None
    }

    pub fn ack(&self, delivery_id: &str) -> Result<()> {
        self.sub.ack(delivery_id)
    }
}
