//! Suggestion generation, user feedback and the kanban and calendar views.
//!
//! The [`Orchestrator`] owns the current router model (its thresholds move
//! with feedback), the registered suggestions and the ledger. All mutations
//! run under one mutex and are logged before they are applied, which gives
//! first-writer-wins on concurrent feedback and exact replay on restart.

pub mod feedback;
pub mod suggest;
pub mod timeparse;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

pub use feedback::{
    replay_thresholds, Action, FeedbackEvent, FeedbackPolicy, Ledger, LedgerEntry, LedgerError, Status,
};
pub use suggest::{suggest, ArtifactRules, CalendarEvent, KanbanTask, Lane, Payload, Proposal, WikiLink};
pub use timeparse::extract_time;

use crate::note::{Note, NoteId};
use crate::router::model::RouterModel;
use crate::taxonomy::Kind;
use crate::vault::store::VaultState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionCandidate {
    pub id: String,
    pub note_id: NoteId,
    pub kind_trigger: Kind,
    pub payload: Payload,
    pub context: Vec<NoteId>,
    pub confidence: f64,
    pub model_version: u64,
    pub status: Status,
}

impl SuggestionCandidate {
    fn from_proposal(id: String, p: Proposal) -> Self {
        SuggestionCandidate {
            id,
            note_id: p.note_id,
            kind_trigger: p.kind_trigger,
            payload: p.payload,
            context: p.context,
            confidence: p.confidence,
            model_version: p.model_version,
            status: Status::Proposed,
        }
    }

    fn is_live(&self) -> bool {
        matches!(self.status, Status::Accepted | Status::Edited)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("unknown suggestion {0}")]
    UnknownSuggestion(String),
    #[error("suggestion {id} is already {status:?}")]
    DoubleFeedback { id: String, status: Status },
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("{0}")]
    Ledger(String),
    #[error(transparent)]
    Policy(#[from] feedback::PolicyError),
}

impl From<LedgerError> for OrchestratorError {
    fn from(e: LedgerError) -> Self {
        OrchestratorError::Ledger(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackOutcome {
    pub suggestion: SuggestionCandidate,
    pub kind: Kind,
    pub threshold_before: f64,
    pub threshold_after: f64,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoardCard {
    pub suggestion_id: String,
    #[serde(flatten)]
    pub task: KanbanTask,
}

/// Exactly the three lanes, each ordered by suggestion creation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KanbanBoard {
    pub todo: Vec<BoardCard>,
    pub in_progress: Vec<BoardCard>,
    pub done: Vec<BoardCard>,
}

impl KanbanBoard {
    pub fn lane(&self, lane: Lane) -> &[BoardCard] {
        match lane {
            Lane::Todo => &self.todo,
            Lane::InProgress => &self.in_progress,
            Lane::Done => &self.done,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalendarEntry {
    pub suggestion_id: String,
    #[serde(flatten)]
    pub event: CalendarEvent,
}

struct Inner {
    ledger: Ledger,
    suggestions: BTreeMap<String, SuggestionCandidate>,
    by_note: HashMap<NoteId, Vec<String>>,
    next_seq: u64,
}

impl Inner {
    fn register(&mut self, id: String, p: Proposal) {
        let seq: u64 = id.trim_start_matches('s').parse().unwrap_or(0);
        self.next_seq = self.next_seq.max(seq + 1);
        self.by_note.entry(p.note_id.clone()).or_default().push(id.clone());
        self.suggestions
            .insert(id.clone(), SuggestionCandidate::from_proposal(id, p));
    }
}

pub struct Orchestrator {
    policy: FeedbackPolicy,
    rules: ArtifactRules,
    k: usize,
    model: RwLock<Arc<RouterModel>>,
    inner: Mutex<Inner>,
}

fn suggestion_id(seq: u64) -> String {
    format!("s{seq:06}")
}

fn validate_edit(original: &SuggestionCandidate, edited: Payload) -> Result<Payload, OrchestratorError> {
    let bad = |m: &str| Err(OrchestratorError::InvalidEdit(m.to_string()));
    let source = original.payload.source_note_id().clone();
    match (&original.payload, edited) {
        (Payload::KanbanTask(_), Payload::KanbanTask(mut t)) => {
            if t.title.trim().is_empty() {
                return bad("task title is empty");
            }
            t.source_note_id = source;
            Ok(Payload::KanbanTask(t))
        }
        (Payload::CalendarEvent(_), Payload::CalendarEvent(mut e)) => {
            if e.title.trim().is_empty() {
                return bad("event title is empty");
            }
            e.source_note_id = source;
            Ok(Payload::CalendarEvent(e))
        }
        (Payload::WikiLink(_), Payload::WikiLink(mut w)) => {
            if w.target_note_ids.is_empty() {
                return bad("wiki link needs at least one target");
            }
            if let Some(t) = w.target_note_ids.iter().find(|t| !original.context.contains(t)) {
                return bad(&format!("target {t} is not in the retrieval context"));
            }
            w.source_note_id = source;
            Ok(Payload::WikiLink(w))
        }
        (o, e) => bad(&format!("cannot turn a {} into a {}", o.variant(), e.variant())),
    }
}

impl Orchestrator {
    /// Rebuild state from `ledger` on top of `model`. When the ledger's latest
    /// model differs from `model` (a new training run), a rebase is logged and
    /// `model` is installed with a fresh version.
    pub fn new(
        model: RouterModel,
        ledger: Ledger,
        policy: FeedbackPolicy,
        rules: ArtifactRules,
        k: usize,
    ) -> Result<Self, OrchestratorError> {
        policy.validate()?;
        let mut inner = Inner {
            ledger,
            suggestions: BTreeMap::new(),
            by_note: HashMap::new(),
            next_seq: 1,
        };
        let entries = inner.ledger.entries().to_vec();
        let last_rebase = entries.iter().rev().find_map(|e| match e {
            LedgerEntry::Rebase {
                model_version,
                thresholds,
            } => Some((*model_version, *thresholds)),
            _ => None,
        });
        for e in entries.iter() {
            match e {
                LedgerEntry::Proposed { id, proposal } => inner.register(id.clone(), proposal.clone()),
                LedgerEntry::Feedback { event, .. } => {
                    let s = inner.suggestions.get_mut(&event.suggestion_id).ok_or_else(|| {
                        OrchestratorError::Ledger(format!("feedback for unknown {}", event.suggestion_id))
                    })?;
                    s.status = Status::after(event.action);
                    if let Some(p) = &event.edited_payload {
                        s.payload = p.clone();
                    }
                }
                LedgerEntry::Rebase { .. } => {}
            }
        }
        let (thresholds, version) = replay_thresholds(&model.thresholds, model.version, &entries, &policy);
        let mut model = model;
        if last_rebase.is_some_and(|(v, t)| v == model.version && t == model.thresholds) {
            model.thresholds = thresholds;
            model.version = version;
        } else {
            if last_rebase.is_some() {
                model.version = model.version.max(version + 1);
            }
            inner.ledger.append(LedgerEntry::Rebase {
                model_version: model.version,
                thresholds: model.thresholds,
            })?;
        }
        Ok(Orchestrator {
            policy,
            rules,
            k: k.max(1),
            model: RwLock::new(Arc::new(model)),
            inner: Mutex::new(inner),
        })
    }

    pub fn in_memory(model: RouterModel) -> Self {
        Orchestrator::new(
            model,
            Ledger::in_memory(),
            FeedbackPolicy::default(),
            ArtifactRules::default(),
            5,
        )
        .expect("default policy is valid")
    }

    pub fn policy(&self) -> &FeedbackPolicy {
        &self.policy
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn model(&self) -> Arc<RouterModel> {
        self.model.read().expect("model lock").clone()
    }

    /// Install a newly trained model. Its version is bumped past the current
    /// one and the ledger records the new threshold baseline.
    pub fn install_model(&self, mut model: RouterModel) -> Result<u64, OrchestratorError> {
        let mut inner = self.inner.lock().expect("orchestrator lock");
        model.version = model.version.max(self.model().version + 1);
        inner.ledger.append(LedgerEntry::Rebase {
            model_version: model.version,
            thresholds: model.thresholds,
        })?;
        let v = model.version;
        *self.model.write().expect("model lock") = Arc::new(model);
        Ok(v)
    }

    /// Register proposals for `note` that are not already present (same
    /// triggering kind and artifact type) and return all of the note's
    /// suggestions in creation order.
    pub fn suggest_for(&self, note: &Note, index: &VaultState) -> Result<Vec<SuggestionCandidate>, OrchestratorError> {
        let model = self.model();
        let proposals = suggest(note, &model, index, self.k, &self.rules);
        let mut inner = self.inner.lock().expect("orchestrator lock");
        for p in proposals {
            let exists = inner.by_note.get(&note.id).is_some_and(|ids| {
                ids.iter().any(|id| {
                    let s = &inner.suggestions[id];
                    s.kind_trigger == p.kind_trigger && s.payload.variant() == p.payload.variant()
                })
            });
            if exists {
                continue;
            }
            let id = suggestion_id(inner.next_seq);
            inner.ledger.append(LedgerEntry::Proposed {
                id: id.clone(),
                proposal: p.clone(),
            })?;
            inner.register(id, p);
        }
        Ok(inner
            .by_note
            .get(&note.id)
            .map(|ids| ids.iter().map(|id| inner.suggestions[id].clone()).collect())
            .unwrap_or_default())
    }

    pub fn suggestion(&self, id: &str) -> Option<SuggestionCandidate> {
        self.inner
            .lock()
            .expect("orchestrator lock")
            .suggestions
            .get(id)
            .cloned()
    }

    pub fn suggestions(&self) -> Vec<SuggestionCandidate> {
        self.inner
            .lock()
            .expect("orchestrator lock")
            .suggestions
            .values()
            .cloned()
            .collect()
    }

    /// Resolve a proposed suggestion and nudge the triggering kind's threshold.
    pub fn record_feedback(&self, event: FeedbackEvent) -> Result<FeedbackOutcome, OrchestratorError> {
        let mut inner = self.inner.lock().expect("orchestrator lock");
        let current = inner
            .suggestions
            .get(&event.suggestion_id)
            .ok_or_else(|| OrchestratorError::UnknownSuggestion(event.suggestion_id.clone()))?;
        if current.status != Status::Proposed {
            return Err(OrchestratorError::DoubleFeedback {
                id: current.id.clone(),
                status: current.status,
            });
        }
        let edited = match (event.action, event.edited_payload.clone()) {
            (Action::Edit, Some(p)) => Some(validate_edit(current, p)?),
            (Action::Edit, None) => return Err(OrchestratorError::InvalidEdit("edit requires a payload".into())),
            (_, Some(_)) => return Err(OrchestratorError::InvalidEdit("only edit carries a payload".into())),
            (_, None) => None,
        };
        let kind = current.kind_trigger;
        let mut model = (*self.model()).clone();
        let before = model.thresholds.get(kind);
        let after = self.policy.apply(before, event.action);
        model.thresholds.set(kind, after);
        model.version += 1;
        let event = FeedbackEvent {
            edited_payload: edited.clone(),
            ..event
        };
        inner.ledger.append(LedgerEntry::Feedback {
            event: event.clone(),
            kind,
            threshold_before: before,
            threshold_after: after,
            model_version: model.version,
        })?;
        let s = inner.suggestions.get_mut(&event.suggestion_id).expect("checked above");
        s.status = Status::after(event.action);
        if let Some(p) = edited {
            s.payload = p;
        }
        let suggestion = s.clone();
        let model_version = model.version;
        *self.model.write().expect("model lock") = Arc::new(model);
        Ok(FeedbackOutcome {
            suggestion,
            kind,
            threshold_before: before,
            threshold_after: after,
            model_version,
        })
    }

    pub fn kanban_board(&self) -> KanbanBoard {
        let inner = self.inner.lock().expect("orchestrator lock");
        let mut board = KanbanBoard::default();
        for s in inner.suggestions.values().filter(|s| s.is_live()) {
            if let Payload::KanbanTask(t) = &s.payload {
                let card = BoardCard {
                    suggestion_id: s.id.clone(),
                    task: t.clone(),
                };
                match t.lane {
                    Lane::Todo => board.todo.push(card),
                    Lane::InProgress => board.in_progress.push(card),
                    Lane::Done => board.done.push(card),
                }
            }
        }
        board
    }

    /// Accepted or edited events on `date`, by start time then suggestion id.
    pub fn calendar_day(&self, date: NaiveDate) -> Vec<CalendarEntry> {
        let inner = self.inner.lock().expect("orchestrator lock");
        let mut out: Vec<(NaiveTime, CalendarEntry)> = inner
            .suggestions
            .values()
            .filter(|s| s.is_live())
            .filter_map(|s| match &s.payload {
                Payload::CalendarEvent(e) if e.date == date => Some((
                    e.start_time,
                    CalendarEntry {
                        suggestion_id: s.id.clone(),
                        event: e.clone(),
                    },
                )),
                _ => None,
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.suggestion_id.cmp(&b.1.suggestion_id)));
        out.into_iter().map(|(_, e)| e).collect()
    }

    pub fn ledger_entries(&self) -> Vec<LedgerEntry> {
        self.inner.lock().expect("orchestrator lock").ledger.entries().to_vec()
    }
}
