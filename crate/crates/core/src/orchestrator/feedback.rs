//! Feedback policy and the append-only ledger.
//!
//! The ledger is line-delimited JSON. Every state change of the orchestrator
//! is one entry, written and synced before it takes effect in memory, so
//! replaying the file reproduces suggestions, their statuses and the router
//! thresholds. A torn final line (crash mid-append) is dropped on open.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::orchestrator::suggest::{Payload, Proposal};
use crate::router::model::{MAX_THRESHOLD, MIN_THRESHOLD};
use crate::taxonomy::{Kind, KindScores};

/// Thresholds live on this grid so repeated steps do not drift.
const GRID: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackPolicy {
    pub delta: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for FeedbackPolicy {
    fn default() -> Self {
        FeedbackPolicy {
            delta: 0.01,
            lower: MIN_THRESHOLD,
            upper: MAX_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid feedback policy: {0}")]
pub struct PolicyError(pub String);

impl FeedbackPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PolicyError(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        if !(0.0 < self.lower && self.lower <= self.upper && self.upper < 1.0) {
            return Err(PolicyError(format!(
                "bounds [{}, {}] must satisfy 0 < lower <= upper < 1",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Accept and edit lower the threshold by `delta`, dismiss raises it.
    pub fn apply(&self, threshold: f64, action: Action) -> f64 {
        let next = match action {
            Action::Accept | Action::Edit => (threshold - self.delta).max(self.lower),
            Action::Dismiss => (threshold + self.delta).min(self.upper),
        };
        ((next * GRID).round() / GRID).clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Edit,
    Dismiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Proposed,
    Accepted,
    Edited,
    Dismissed,
}

impl Status {
    pub fn after(action: Action) -> Status {
        match action {
            Action::Accept => Status::Accepted,
            Action::Edit => Status::Edited,
            Action::Dismiss => Status::Dismissed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub suggestion_id: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_payload: Option<Payload>,
    pub timestamp: DateTime<Utc>,
}

impl FeedbackEvent {
    pub fn new(suggestion_id: impl Into<String>, action: Action, edited_payload: Option<Payload>) -> Self {
        FeedbackEvent {
            suggestion_id: suggestion_id.into(),
            action,
            edited_payload,
            timestamp: Utc::now(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum LedgerEntry {
    /// A new router model was installed; thresholds restart from these.
    Rebase {
        model_version: u64,
        thresholds: KindScores,
    },
    Proposed {
        id: String,
        proposal: Proposal,
    },
    Feedback {
        event: FeedbackEvent,
        kind: Kind,
        threshold_before: f64,
        threshold_after: f64,
        model_version: u64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Append-only entry log, optionally backed by a file.
#[derive(Debug)]
pub struct Ledger {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger {
            path: None,
            file: None,
            entries: Vec::new(),
        }
    }

    /// Open or create the ledger at `path` and read back its entries.
    pub fn open(path: &Path) -> Result<Self, LedgerError> {
        let mut entries = Vec::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            let mut lines = reader.split(b'\n').enumerate().peekable();
            while let Some((i, line)) = lines.next() {
                let line = line?;
                let is_last = lines.peek().is_none();
                if line.iter().all(u8::is_ascii_whitespace) {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_slice::<LedgerEntry>(&line) {
                    Ok(e) => {
                        entries.push(e);
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(e) if is_last => {
                        tracing::warn!(line = i + 1, error = %e, "dropping torn ledger tail");
                    }
                    Err(e) => {
                        return Err(LedgerError::Corrupt {
                            line: i + 1,
                            reason: e.to_string(),
                        })
                    }
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let len = file.metadata()?.len();
        if len > valid_len {
            file.set_len(valid_len)?;
        } else if len + 1 == valid_len {
            file.write_all(b"\n")?;
        }
        Ok(Ledger {
            path: Some(path.to_path_buf()),
            file: Some(file),
            entries,
        })
    }

    pub fn append(&mut self, entry: LedgerEntry) -> Result<(), LedgerError> {
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("ledger entry serializes");
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

/// Threshold state after replaying `entries` on top of `initial`.
/// Returns the thresholds and the model version they belong to.
pub fn replay_thresholds(
    initial: &KindScores,
    initial_version: u64,
    entries: &[LedgerEntry],
    policy: &FeedbackPolicy,
) -> (KindScores, u64) {
    let mut t = *initial;
    let mut version = initial_version;
    for e in entries {
        match e {
            LedgerEntry::Rebase {
                model_version,
                thresholds,
            } => {
                t = *thresholds;
                version = *model_version;
            }
            LedgerEntry::Feedback { event, kind, .. } => {
                t.set(*kind, policy.apply(t.get(*kind), event.action));
                version += 1;
            }
            LedgerEntry::Proposed { .. } => {}
        }
    }
    (t, version)
}
