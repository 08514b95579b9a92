//! Concept routing: free-form note text to structured concept annotations.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::concept::{CanonicalScores, Concept, QaStatus};
use crate::forge::client::{fix_prompt, route_prompt, TextClient};
use crate::forge::lexicon;
use crate::hash::unit_hash;
use crate::note::{Note, Persona};
use crate::taxonomy::Kind;

/// Concept payload as exchanged with a text client (no ids yet).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptDraft {
    pub kind: Kind,
    pub summary: String,
    pub entities: Vec<String>,
    pub analysis: String,
    pub scores: CanonicalScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitive_state: Option<String>,
}

impl ConceptDraft {
    pub fn into_concept(self, note: &Note, ordinal: usize) -> Concept {
        Concept {
            id: format!("{}#c{}", note.id, ordinal),
            note_id: note.id.clone(),
            kind: self.kind,
            summary: self.summary,
            entities: self.entities,
            analysis: self.analysis,
            scores: self.scores,
            qa_status: QaStatus::Pending,
            cognitive_state: self.cognitive_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoutingError {
    #[error("client response unusable after {attempts} attempt(s): {reason}")]
    Unparseable { attempts: u32, reason: String },
    #[error(transparent)]
    Client(#[from] crate::forge::client::ClientError),
}

pub fn split_sentences(content: &str) -> Vec<&str> {
    static SPLIT: OnceLock<Regex> = OnceLock::new();
    let re = SPLIT.get_or_init(|| Regex::new(r"[.!?…]+(?:\s+|$)|\n+").unwrap());
    re.split(content).map(str::trim).filter(|s| !s.is_empty()).collect()
}

const NOT_ENTITIES: &[&str] = &[
    "I",
    "I'd",
    "I'm",
    "AM",
    "PM",
    "Todo",
    "Idea",
    "Fact",
    "Risk",
    "Requirement",
];

/// Capitalized spans that do not open the sentence.
pub fn extract_entities(sentence: &str) -> Vec<String> {
    static CAPS: OnceLock<Regex> = OnceLock::new();
    let re = CAPS.get_or_init(|| Regex::new(r"\b[A-Z][\w'’-]*(?:\s+[A-Z][\w'’-]*)*").unwrap());
    let mut out: Vec<String> = Vec::new();
    for m in re.find_iter(sentence) {
        if m.start() == 0 {
            // Keep the tail of a span that starts the sentence ("Maya Chen" minus nothing, "Todo Jira" -> "Jira").
            let rest: Vec<&str> = m.as_str().split_whitespace().skip(1).collect();
            if !rest.is_empty() {
                out.push(rest.join(" "));
            }
            continue;
        }
        let s = m.as_str();
        if !NOT_ENTITIES.contains(&s) && !out.iter().any(|e| e == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Rule-based routing: one draft per sentence that carries a kind cue.
pub fn rule_drafts(content: &str, persona: Persona) -> Vec<ConceptDraft> {
    split_sentences(content)
        .into_iter()
        .filter_map(|sentence| {
            let kind = lexicon::classify_sentence(sentence, persona)?;
            let base = lexicon::score_profile(kind);
            let mut scores = [0.0; 5];
            for (i, (s, b)) in scores.iter_mut().zip(base).enumerate() {
                let u = unit_hash(i as u64, sentence);
                *s = ((b + (u - 0.5) * 0.1) * 100.0).round() / 100.0;
                *s = s.clamp(0.0, 1.0);
            }
            Some(ConceptDraft {
                kind,
                summary: sentence.chars().take(160).collect(),
                entities: extract_entities(sentence),
                analysis: lexicon::describe_scores(kind, scores),
                scores: CanonicalScores::from_array(scores),
                cognitive_state: None,
            })
        })
        .collect()
}

/// Route a note into concepts. Without a client the cue lexicon decides;
/// with one, its JSON reply is parsed strictly and re-requested up to
/// `autofix_attempts` times.
pub fn route_concepts(
    note: &Note,
    client: Option<&dyn TextClient>,
    autofix_attempts: u32,
) -> Result<Vec<Concept>, RoutingError> {
    let drafts = match client {
        None => rule_drafts(note.content(), note.persona),
        Some(client) => client_drafts(note, client, autofix_attempts)?,
    };
    Ok(drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.into_concept(note, i + 1))
        .collect())
}

fn parse_drafts(reply: &str) -> Result<Vec<ConceptDraft>, String> {
    let trimmed = reply.trim();
    // Tolerate a fenced code block around the JSON.
    let body = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    serde_json::from_str::<Vec<ConceptDraft>>(body.trim()).map_err(|e| e.to_string())
}

fn client_drafts(
    note: &Note,
    client: &dyn TextClient,
    autofix_attempts: u32,
) -> Result<Vec<ConceptDraft>, RoutingError> {
    let mut reply = client.complete(&route_prompt(note))?;
    let mut attempts = 1;
    loop {
        match parse_drafts(&reply) {
            Ok(drafts) => return Ok(drafts),
            Err(reason) if attempts > autofix_attempts => {
                return Err(RoutingError::Unparseable { attempts, reason });
            }
            Err(reason) => {
                let raw = serde_json::Value::String(reply.clone());
                reply = client.complete(&fix_prompt(&raw, &reason, Some(note.content())))?;
                attempts += 1;
            }
        }
    }
}
