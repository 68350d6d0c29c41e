//! Time sources.
//!
//! All components take time through the `Clock` trait so the same code runs
//! against the wall clock in a live deployment and against a virtual clock in
//! simulation, where time advances only when the scheduler says so.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Milliseconds since the clock's epoch.
    fn now_ms(&self) -> u64;
}

/// Wall time in milliseconds since the Unix epoch.
#[derive(Debug, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A manually driven clock. Advancing uses a compare-and-max so concurrent
/// advances from worker threads can interleave in any order and still land on
/// the same final reading.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new(start_ms: u64) -> Arc<VirtualClock> {
        Arc::new(VirtualClock { now: AtomicU64::new(start_ms) })
    }

    /// Moves the clock forward to `target_ms` if it is not already there.
    /// Never moves backwards.
    pub fn advance_to(&self, target_ms: u64) {
        self.now.fetch_max(target_ms, Ordering::SeqCst);
    }

    pub fn advance_by(&self, delta_ms: u64) {
        self.now.fetch_add(delta_ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_never_rewinds() {
        let clock = VirtualClock::new(100);
        clock.advance_to(500);
        clock.advance_to(200);
        assert_eq!(clock.now_ms(), 500);
        clock.advance_by(50);
        assert_eq!(clock.now_ms(), 550);
    }
}
