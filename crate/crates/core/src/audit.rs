//! The service auditor: an append-only transaction history.
//!
//! Every gateway transaction lands here exactly once, successful or not,
//! with one hop entry per provider touched. Records go to newline-delimited
//! JSON segment files that rotate at a fixed record count, and an in-memory
//! mirror serves queries and latency statistics.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::capability::Capability;
use crate::error::{ErrorKind, FrameworkError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub service_id: String,
    pub capability: Capability,
    pub start_ms: u64,
    pub end_ms: u64,
    pub outcome: Outcome,
}

/// `ok` or the fault kind that ended the hop or transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Fault(ErrorKind),
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::Fault(kind) => kind.as_str(),
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == "ok" {
            Ok(Outcome::Ok)
        } else {
            ErrorKind::parse(&raw)
                .map(Outcome::Fault)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown outcome `{raw}`")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub transaction_id: String,
    pub correlation_id: String,
    pub consumer_id: String,
    pub hops: Vec<Hop>,
    pub total_ms: u64,
    pub final_outcome: Outcome,
}

impl AuditRecord {
    fn validate(&self) -> Result<()> {
        if self.final_outcome == Outcome::Ok && self.hops.is_empty() {
            return Err(FrameworkError::contract(
                "a completed transaction must record at least one hop",
            ));
        }
        for hop in &self.hops {
            if hop.end_ms < hop.start_ms {
                return Err(FrameworkError::contract(format!(
                    "hop for `{}` ends before it starts",
                    hop.service_id
                )));
            }
            if self.total_ms < hop.end_ms - hop.start_ms {
                return Err(FrameworkError::contract(
                    "total_ms is smaller than a hop span",
                ));
            }
        }
        Ok(())
    }
}

/// A stored record with its assigned sequence number, as written to disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequencedRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub record: AuditRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p50_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p95_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ms: Option<u64>,
    pub fault_counts: BTreeMap<String, u64>,
}

pub enum Filter<'a> {
    Transaction(&'a str),
    Capability(&'a Capability),
    TimeRange(u64, u64),
    All,
}

struct Segment {
    file: File,
    records: u64,
}

struct Inner {
    next_seq: u64,
    active: Option<Segment>,
    mirror: Vec<SequencedRecord>,
}

pub struct Auditor {
    dir: PathBuf,
    rotate_records: u64,
    inner: Mutex<Inner>,
}

impl Auditor {
    /// Opens (or creates) an audit log directory. Existing segments are read
    /// back so sequence numbers continue where the last run stopped.
    pub fn open(dir: impl Into<PathBuf>, rotate_records: u64) -> Result<Auditor> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| FrameworkError::contract(format!("cannot create audit dir: {e}")))?;
        let mut mirror = Vec::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| FrameworkError::contract(format!("cannot read audit dir: {e}")))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "ndjson"))
            .collect();
        paths.sort();
        for path in paths {
            let file = File::open(&path)
                .map_err(|e| FrameworkError::contract(format!("cannot open segment: {e}")))?;
            for line in BufReader::new(file).lines() {
                let line =
                    line.map_err(|e| FrameworkError::contract(format!("segment read: {e}")))?;
                if line.is_empty() {
                    continue;
                }
                let record: SequencedRecord = serde_json::from_str(&line)
                    .map_err(|e| FrameworkError::contract(format!("corrupt audit record: {e}")))?;
                mirror.push(record);
            }
        }
        mirror.sort_by_key(|r| r.seq);
        let next_seq = mirror.last().map(|r| r.seq + 1).unwrap_or(1);
        Ok(Auditor {
            dir,
            rotate_records,
            inner: Mutex::new(Inner { next_seq, active: None, mirror }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends one record and returns its sequence number. Records are
    /// immutable once written; rotation starts a fresh segment file, never
    /// touching committed ones.
    pub fn append(&self, record: AuditRecord) -> Result<u64> {
        record.validate()?;
        let mut inner = self.lock();
        let seq = inner.next_seq;
        let sequenced = SequencedRecord { seq, record };
        let line = serde_json::to_string(&sequenced)
            .map_err(|e| FrameworkError::contract(format!("record serialization: {e}")))?;

        let needs_new = match &inner.active {
            Some(segment) => segment.records >= self.rotate_records,
            None => true,
        };
        if needs_new {
            let path = self.dir.join(format!("audit-{seq:08}.ndjson"));
            let file = OpenOptions::new()
                .create_new(true)
                .append(true)
                .open(&path)
                .map_err(|e| FrameworkError::contract(format!("cannot create segment: {e}")))?;
            inner.active = Some(Segment { file, records: 0 });
        }
        let segment = inner.active.as_mut().expect("active segment");
        segment
            .file
            .write_all(line.as_bytes())
            .and_then(|()| segment.file.write_all(b"\n"))
            .map_err(|e| FrameworkError::contract(format!("segment write: {e}")))?;
        segment.records += 1;
        inner.next_seq += 1;
        inner.mirror.push(sequenced);
        Ok(seq)
    }

    /// Matching records in sequence order. A time-range filter matches any
    /// record with a hop overlapping the inclusive range.
    pub fn query(&self, filter: Filter<'_>) -> Vec<SequencedRecord> {
        let inner = self.lock();
        inner
            .mirror
            .iter()
            .filter(|r| match &filter {
                Filter::Transaction(id) => r.record.transaction_id == *id,
                Filter::Capability(cap) => r.record.hops.iter().any(|h| h.capability == **cap),
                Filter::TimeRange(from, to) => {
                    r.record.hops.iter().any(|h| h.start_ms <= *to && h.end_ms >= *from)
                }
                Filter::All => true,
            })
            .cloned()
            .collect()
    }

    /// Latency and fault statistics over the records matching a capability,
    /// optionally narrowed to a time range. Percentiles use nearest-rank on
    /// total_ms, so results are exact and reproducible.
    pub fn stats(&self, capability: &Capability, window: Option<(u64, u64)>) -> Stats {
        let records = self.query(Filter::Capability(capability));
        let mut totals: Vec<u64> = records
            .iter()
            .filter(|r| match window {
                Some((from, to)) => {
                    r.record.hops.iter().any(|h| h.start_ms <= to && h.end_ms >= from)
                }
                None => true,
            })
            .map(|r| r.record.total_ms)
            .collect();
        totals.sort_unstable();
        let mut fault_counts = BTreeMap::new();
        for record in &records {
            if let Outcome::Fault(kind) = record.record.final_outcome {
                *fault_counts.entry(kind.as_str().to_string()).or_insert(0) += 1;
            }
        }
        Stats {
            count: totals.len() as u64,
            p50_ms: nearest_rank(&totals, 50),
            p95_ms: nearest_rank(&totals, 95),
            max_ms: totals.last().copied(),
            fault_counts,
        }
    }

    pub fn record_count(&self) -> u64 {
        self.lock().mirror.len() as u64
    }

    /// Records with seq strictly greater than `after_seq`, for tailing.
    pub fn records_after(&self, after_seq: u64) -> Vec<SequencedRecord> {
        let inner = self.lock();
        inner.mirror.iter().filter(|r| r.seq > after_seq).cloned().collect()
    }

    pub fn segment_paths(&self) -> Vec<PathBuf> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.dir)
            .into_iter()
            .flatten()
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "ndjson"))
            .collect();
        paths.sort();
        paths
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Nearest-rank percentile: the value at rank ceil(p/100 * n), 1-indexed,
/// over an ascending-sorted slice. Empty input has no percentile.
fn nearest_rank(sorted: &[u64], p: u64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as u64;
    let rank = (p * n).div_ceil(100).max(1);
    Some(sorted[(rank - 1) as usize])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(s: &str) -> Capability {
        Capability::parse(s).unwrap()
    }

    fn record(txn: &str, capability: &str, total_ms: u64) -> AuditRecord {
        AuditRecord {
            transaction_id: txn.to_string(),
            correlation_id: format!("c-{txn}"),
            consumer_id: "app-1".to_string(),
            hops: vec![Hop {
                service_id: "s1".to_string(),
                capability: cap(capability),
                start_ms: 100,
                end_ms: 100 + total_ms,
                outcome: Outcome::Ok,
            }],
            total_ms,
            final_outcome: Outcome::Ok,
        }
    }

    fn auditor(rotate: u64) -> (tempfile::TempDir, Auditor) {
        let dir = tempfile::tempdir().unwrap();
        let auditor = Auditor::open(dir.path().join("audit"), rotate).unwrap();
        (dir, auditor)
    }

    #[test]
    fn seqs_start_at_one_and_increase() {
        let (_dir, auditor) = auditor(1000);
        assert_eq!(auditor.append(record("t1", "a.b", 5)).unwrap(), 1);
        assert_eq!(auditor.append(record("t2", "a.b", 6)).unwrap(), 2);
    }

    #[test]
    fn invalid_records_rejected() {
        let (_dir, auditor) = auditor(1000);
        let mut bad = record("t1", "a.b", 5);
        bad.hops[0].end_ms = bad.hops[0].start_ms - 1;
        assert!(auditor.append(bad).is_err());
        let mut empty = record("t2", "a.b", 5);
        empty.hops.clear();
        assert!(auditor.append(empty).is_err());
    }

    #[test]
    fn rotation_starts_new_segments_and_reload_continues_seq() {
        let (dir, auditor) = auditor(3);
        for n in 0..7 {
            auditor.append(record(&format!("t{n}"), "a.b", n)).unwrap();
        }
        assert_eq!(auditor.segment_paths().len(), 3);
        drop(auditor);
        let reopened = Auditor::open(dir.path().join("audit"), 3).unwrap();
        assert_eq!(reopened.record_count(), 7);
        assert_eq!(reopened.append(record("t7", "a.b", 7)).unwrap(), 8);
    }

    #[test]
    fn query_by_transaction_and_range() {
        let (_dir, auditor) = auditor(1000);
        auditor.append(record("t1", "a.b", 10)).unwrap();
        auditor.append(record("t2", "c.d", 20)).unwrap();
        assert_eq!(auditor.query(Filter::Transaction("t2")).len(), 1);
        assert_eq!(auditor.query(Filter::Capability(&cap("a.b"))).len(), 1);
        // Both records' hops start at 100; a disjoint range matches nothing.
        assert_eq!(auditor.query(Filter::TimeRange(0, 99)).len(), 0);
        assert_eq!(auditor.query(Filter::TimeRange(100, 105)).len(), 2);
    }

    #[test]
    fn stats_match_the_analytic_percentiles() {
        let (_dir, auditor) = auditor(100_000);
        for ms in 1..=100 {
            auditor.append(record(&format!("t{ms}"), "a.b", ms)).unwrap();
        }
        let stats = auditor.stats(&cap("a.b"), None);
        assert_eq!(stats.count, 100);
        assert_eq!(stats.p50_ms, Some(50));
        assert_eq!(stats.p95_ms, Some(95));
        assert_eq!(stats.max_ms, Some(100));
    }

    #[test]
    fn single_record_is_its_own_percentile() {
        let (_dir, auditor) = auditor(1000);
        auditor.append(record("t1", "a.b", 600)).unwrap();
        let stats = auditor.stats(&cap("a.b"), None);
        assert_eq!(stats.p50_ms, Some(600));
        assert_eq!(stats.p95_ms, Some(600));
    }

    #[test]
    fn empty_store_stats_have_no_percentiles() {
        let (_dir, auditor) = auditor(1000);
        let stats = auditor.stats(&cap("a.b"), None);
        assert_eq!(stats.count, 0);
        assert_eq!(stats.p50_ms, None);
        assert_eq!(stats.max_ms, None);
    }

    #[test]
    fn fault_outcomes_are_tallied_by_kind() {
        let (_dir, auditor) = auditor(1000);
        let mut failed = record("t1", "a.b", 30);
        failed.final_outcome = Outcome::Fault(ErrorKind::CrashFailure);
        failed.hops[0].outcome = Outcome::Fault(ErrorKind::CrashFailure);
        auditor.append(failed).unwrap();
        auditor.append(record("t2", "a.b", 10)).unwrap();
        let stats = auditor.stats(&cap("a.b"), None);
        assert_eq!(stats.fault_counts.get("CrashFailure"), Some(&1));
    }
}
