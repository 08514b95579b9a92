//! Candidate artifacts derived from one classified note.

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::note::{Note, NoteId};
use crate::orchestrator::timeparse::extract_time;
use crate::router::model::RouterModel;
use crate::taxonomy::Kind;
use crate::vault::store::VaultState;

pub const TITLE_CHARS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    Todo,
    InProgress,
    Done,
}

impl Lane {
    pub const ALL: [Lane; 3] = [Lane::Todo, Lane::InProgress, Lane::Done];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarEvent {
    pub date: NaiveDate,
    pub start_time: NaiveTime,
    pub title: String,
    pub source_note_id: NoteId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KanbanTask {
    pub title: String,
    pub lane: Lane,
    pub source_note_id: NoteId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiLink {
    pub source_note_id: NoteId,
    pub target_note_ids: Vec<NoteId>,
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    CalendarEvent(CalendarEvent),
    KanbanTask(KanbanTask),
    WikiLink(WikiLink),
}

impl Payload {
    pub fn variant(&self) -> &'static str {
        match self {
            Payload::CalendarEvent(_) => "calendar_event",
            Payload::KanbanTask(_) => "kanban_task",
            Payload::WikiLink(_) => "wiki_link",
        }
    }

    pub fn source_note_id(&self) -> &NoteId {
        match self {
            Payload::CalendarEvent(e) => &e.source_note_id,
            Payload::KanbanTask(t) => &t.source_note_id,
            Payload::WikiLink(w) => &w.source_note_id,
        }
    }
}

/// Which predicted kinds produce which artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactRules {
    pub kanban: Vec<Kind>,
    /// Produce a calendar event when the content carries a time.
    pub calendar: Vec<Kind>,
    pub wiki: Vec<Kind>,
}

impl Default for ArtifactRules {
    fn default() -> Self {
        ArtifactRules {
            kanban: vec![Kind::Task],
            calendar: vec![Kind::Task, Kind::Event, Kind::Goal],
            wiki: vec![Kind::Insight, Kind::Theme, Kind::Idea],
        }
    }
}

/// A candidate before it is registered and given an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub note_id: NoteId,
    pub kind_trigger: Kind,
    pub payload: Payload,
    pub context: Vec<NoteId>,
    pub confidence: f64,
    pub model_version: u64,
}

pub fn title_of(content: &str) -> String {
    let line = content.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    line.chars()
        .take(TITLE_CHARS)
        .collect::<String>()
        .trim_end()
        .to_string()
}

/// Proposals for `note` in taxonomy order of the triggering kind; within a
/// kind kanban precedes calendar precedes wiki. Retrieval excludes the note
/// itself; an empty index or no other notes drops wiki links.
pub fn suggest(note: &Note, model: &RouterModel, index: &VaultState, k: usize, rules: &ArtifactRules) -> Vec<Proposal> {
    let proba = model.predict_proba(note);
    let labels = proba.threshold(&model.thresholds);
    if labels.is_empty() {
        return Vec::new();
    }
    let title = title_of(note.content());
    let when = extract_time(note.content(), note.header.date);
    let context: Vec<NoteId> = index
        .search_note(note, k.saturating_add(1))
        .map(|hits| {
            hits.into_iter()
                .map(|(id, _)| id)
                .filter(|id| *id != note.id)
                .take(k)
                .collect()
        })
        .unwrap_or_default();
    let mut out = Vec::new();
    for kind in labels.iter() {
        let mut push = |payload: Payload| {
            out.push(Proposal {
                note_id: note.id.clone(),
                kind_trigger: kind,
                payload,
                context: context.clone(),
                confidence: proba.get(kind),
                model_version: model.version,
            })
        };
        if rules.kanban.contains(&kind) {
            push(Payload::KanbanTask(KanbanTask {
                title: title.clone(),
                lane: Lane::Todo,
                source_note_id: note.id.clone(),
            }));
        }
        if rules.calendar.contains(&kind) {
            if let Some((date, start_time)) = when {
                push(Payload::CalendarEvent(CalendarEvent {
                    date,
                    start_time,
                    title: title.clone(),
                    source_note_id: note.id.clone(),
                }));
            }
        }
        if rules.wiki.contains(&kind) && !context.is_empty() {
            push(Payload::WikiLink(WikiLink {
                source_note_id: note.id.clone(),
                target_note_ids: context.clone(),
                topic: format!("{kind}: {title}"),
            }));
        }
    }
    out
}
