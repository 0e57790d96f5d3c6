use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EnforcementError;
use crate::digest::sha256_hex;

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditKind {
    AssessmentCompleted,
    ActionDecided,
    ActionApplied,
    RollbackPerformed,
    PolicyIngested,
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    /// 1-based.
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub kind: AuditKind,
    pub payload: Value,
    pub payload_digest: String,
    pub prev_hash: String,
    pub this_hash: String,
}

fn payload_digest(payload: &Value) -> String {
    sha256_hex(serde_json::to_string(payload).expect("json value serializes"))
}

fn record_hash(seq: u64, timestamp: &DateTime<Utc>, kind: AuditKind, digest: &str, prev: &str) -> String {
    sha256_hex(format!("{seq}|{}|{kind}|{digest}|{prev}", timestamp.to_rfc3339()))
}

impl AuditRecord {
    pub fn component_id(&self) -> Option<&str> {
        self.payload.get("component_id").and_then(Value::as_str)
    }

    pub fn action_id(&self) -> Option<&str> {
        self.payload.get("action_id").and_then(Value::as_str)
    }

    fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit record serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainVerdict {
    Intact,
    BrokenAt(u64),
}

/// Checks sequence numbers, payload digests and the hash links from genesis,
/// reporting the first record that fails.
pub fn verify_audit_chain(records: &[AuditRecord]) -> ChainVerdict {
    let mut prev = GENESIS_HASH.to_string();
    for (i, r) in records.iter().enumerate() {
        let seq = i as u64 + 1;
        let ok = r.seq == seq
            && r.prev_hash == prev
            && r.payload_digest == payload_digest(&r.payload)
            && r.this_hash == record_hash(r.seq, &r.timestamp, r.kind, &r.payload_digest, &r.prev_hash);
        if !ok {
            return ChainVerdict::BrokenAt(seq);
        }
        prev = r.this_hash.clone();
    }
    ChainVerdict::Intact
}

/// Verifies the on-disk form. A line that does not parse, or that is not the
/// canonical serialization of what it parses to, breaks the chain there.
pub fn verify_audit_text(text: &str) -> ChainVerdict {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match serde_json::from_str::<AuditRecord>(line) {
            Ok(r) if r.to_line() == line => records.push(r),
            _ => return ChainVerdict::BrokenAt(i as u64 + 1),
        }
    }
    verify_audit_chain(&records)
}

/// Append-only hash-chained log, optionally mirrored to a JSONL file.
#[derive(Debug, Default)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
    path: Option<PathBuf>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates the log file. An existing file must verify.
    pub fn open(path: &Path) -> Result<Self, EnforcementError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(EnforcementError::Io(format!("{}: {e}", path.display()))),
        };
        if let ChainVerdict::BrokenAt(seq) = verify_audit_text(&text) {
            return Err(EnforcementError::AuditBroken(seq));
        }
        let records = text.lines().map(|l| serde_json::from_str(l).expect("verified line parses")).collect();
        Ok(Self { records, path: Some(path.to_path_buf()) })
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn verify(&self) -> ChainVerdict {
        verify_audit_chain(&self.records)
    }

    pub fn append(&mut self, timestamp: DateTime<Utc>, kind: AuditKind, payload: Value) -> Result<&AuditRecord, EnforcementError> {
        let seq = self.records.len() as u64 + 1;
        let prev_hash = self.records.last().map_or(GENESIS_HASH.to_string(), |r| r.this_hash.clone());
        let digest = payload_digest(&payload);
        let this_hash = record_hash(seq, &timestamp, kind, &digest, &prev_hash);
        let record = AuditRecord { seq, timestamp, kind, payload, payload_digest: digest, prev_hash, this_hash };
        if let Some(path) = &self.path {
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| EnforcementError::Io(format!("{}: {e}", path.display())))?;
            writeln!(f, "{}", record.to_line())
                .and_then(|_| f.sync_data())
                .map_err(|e| EnforcementError::Io(format!("{}: {e}", path.display())))?;
        }
        self.records.push(record);
        Ok(self.records.last().unwrap())
    }

    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| r.to_line() + "\n").collect()
    }
}
