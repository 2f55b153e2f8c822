//! Event log: one entry per processed fabric event, exportable as JSON lines.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    #[serde(rename = "DELIVER")]
    Deliver,
    #[serde(rename = "DEAUTH")]
    Deauth,
    #[serde(rename = "ATTACH")]
    Attach,
    #[serde(rename = "DETACH")]
    Detach,
    #[serde(rename = "EFFECT")]
    Effect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub at: u64,
    pub kind: EventKind,
    pub from: String,
    pub to: String,
    pub channel_class: Option<String>,
    pub payload_digest: Option<String>,
}

pub fn payload_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default, Clone)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// One JSON object per line, in processing order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("serializable entry"));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }
}
