//! External text-service boundary used by generation, routing and QA.
//!
//! Prompts are plain text whose first line is `### task: <name>`, followed by
//! free-form instructions and a `### input` line introducing a JSON payload.
//! The stub client understands the same envelope, so every client-mode path
//! can be exercised offline.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::concept::CanonicalScores;
use crate::forge::lexicon;
use crate::note::Note;
use crate::taxonomy::Kind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("service returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("client not configured: {0}")]
    Config(String),
}

pub trait TextClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;

    /// Score in `[0, 1]` implied by the prose analysis of a concept.
    fn score_consistency(&self, analysis: &str, scores: &CanonicalScores) -> Result<f64, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTask {
    GenerateNote,
    RouteConcepts,
    FixAnnotation,
}

impl PromptTask {
    fn as_str(self) -> &'static str {
        match self {
            PromptTask::GenerateNote => "generate_note",
            PromptTask::RouteConcepts => "route_concepts",
            PromptTask::FixAnnotation => "fix_annotation",
        }
    }
}

pub fn build_prompt(task: PromptTask, instructions: &str, input: &serde_json::Value) -> String {
    format!(
        "### task: {}\n{}\n### input\n{}",
        task.as_str(),
        instructions.trim(),
        input
    )
}

/// Split a prompt into its task and JSON payload.
pub fn parse_prompt(prompt: &str) -> Option<(PromptTask, serde_json::Value)> {
    let first = prompt.lines().next()?;
    let task = match first.strip_prefix("### task: ")?.trim() {
        "generate_note" => PromptTask::GenerateNote,
        "route_concepts" => PromptTask::RouteConcepts,
        "fix_annotation" => PromptTask::FixAnnotation,
        _ => return None,
    };
    let (_, payload) = prompt.split_once("\n### input\n")?;
    Some((task, serde_json::from_str(payload).ok()?))
}

pub fn route_prompt(note: &Note) -> String {
    build_prompt(
        PromptTask::RouteConcepts,
        "Extract concepts from the note. Reply with a JSON array of objects with keys \
         kind, summary, entities (list of strings), analysis, scores (telos, logos, ethos, \
         pathos, kairos in [0,1]) and optionally cognitive_state. Allowed kinds: task, insight, \
         idea, suggestion, theme, goal, risk, requirement, decision, fact, tool_feature, habit, \
         draft, artifact, event, strategy, activity, solution, ui_action, communication.",
        &json!({ "persona": note.persona, "content": note.content() }),
    )
}

pub fn fix_prompt(record: &serde_json::Value, reason: &str, note_content: Option<&str>) -> String {
    build_prompt(
        PromptTask::FixAnnotation,
        &format!(
            "The annotation below failed review ({reason}). Return a corrected annotation as a \
             single JSON object with the same keys, keeping the analysis and scores consistent."
        ),
        &json!({ "annotation": record, "note": note_content }),
    )
}

/// Mean of the `name value` score mentions in an analysis, falling back to
/// level words (low/moderate/high).
pub fn implied_score(analysis: &str) -> Option<f64> {
    static NUMERIC: OnceLock<Regex> = OnceLock::new();
    static LEVEL: OnceLock<Regex> = OnceLock::new();
    let numeric = NUMERIC.get_or_init(|| {
        Regex::new(r"(?i)\b(?:telos|logos|ethos|pathos|kairos)\s*[:=]?\s*(-?[0-9]*\.?[0-9]+)").unwrap()
    });
    let values: Vec<f64> = numeric
        .captures_iter(analysis)
        .filter_map(|c| c[1].parse().ok())
        .collect();
    if !values.is_empty() {
        return Some((values.iter().sum::<f64>() / values.len() as f64).clamp(0.0, 1.0));
    }
    let level = LEVEL.get_or_init(|| Regex::new(r"(?i)\b(low|moderate|high)\b").unwrap());
    let values: Vec<f64> = level
        .captures_iter(analysis)
        .map(|c| match c[1].to_ascii_lowercase().as_str() {
            "low" => 0.2,
            "moderate" => 0.5,
            _ => 0.8,
        })
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Offline client: deterministic per `(seed, input)`.
#[derive(Debug, Clone)]
pub struct StubClient {
    pub seed: u64,
    /// Half-width of the hash-seeded jitter added to implied scores.
    pub jitter: f64,
}

impl StubClient {
    pub fn new(seed: u64) -> Self {
        StubClient { seed, jitter: 0.02 }
    }

    fn unit_hash(&self, input: &str) -> f64 {
        crate::hash::unit_hash(self.seed, input)
    }

    fn stub_note(&self, input: &serde_json::Value) -> String {
        let kinds: Vec<Kind> = input
            .get("kinds")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default();
        let topic = input.get("topic").and_then(|v| v.as_str()).unwrap_or("project");
        let mut sentences: Vec<String> = kinds
            .iter()
            .map(|k| {
                let ts = lexicon::templates(*k);
                let t = ts[(self.unit_hash(&format!("{topic}{k}")) * ts.len() as f64) as usize % ts.len()];
                let slots = lexicon::Slots {
                    topic,
                    person: lexicon::PEOPLE[0],
                    tool: lexicon::TOOLS[0],
                    time: lexicon::TIMES[0],
                    day: lexicon::DAYS[0],
                };
                lexicon::fill_template(t, &slots)
            })
            .collect();
        if sentences.is_empty() {
            sentences.push(format!("Spent some time on the {topic}"));
        }
        format!("{}.", sentences.join(". "))
    }

    fn stub_fix(&self, input: &serde_json::Value) -> Result<String, ClientError> {
        let mut record = input
            .get("annotation")
            .cloned()
            .filter(|v| v.is_object())
            .ok_or_else(|| ClientError::Malformed("fix input has no annotation".into()))?;
        let obj = record.as_object_mut().expect("checked object");
        let analysis = obj
            .get("analysis")
            .and_then(|v| v.as_str())
            .unwrap_or_default()
            .to_string();
        // Re-derive the numbers from the prose so the two agree.
        let target = implied_score(&analysis).unwrap_or(0.5);
        obj.insert(
            "scores".into(),
            serde_json::to_value(CanonicalScores::splat(target)).unwrap(),
        );
        if !obj.get("entities").is_some_and(|v| v.is_array()) {
            obj.insert("entities".into(), json!([]));
        }
        Ok(record.to_string())
    }
}

impl TextClient for StubClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let (task, input) =
            parse_prompt(prompt).ok_or_else(|| ClientError::Malformed("unrecognized prompt envelope".into()))?;
        match task {
            PromptTask::GenerateNote => Ok(self.stub_note(&input)),
            PromptTask::RouteConcepts => {
                let persona = input
                    .get("persona")
                    .and_then(|v| serde_json::from_value(v.clone()).ok())
                    .unwrap_or(crate::note::Persona::Infp);
                let content = input.get("content").and_then(|v| v.as_str()).unwrap_or_default();
                let drafts = crate::forge::route::rule_drafts(content, persona);
                Ok(serde_json::to_string(&drafts).expect("drafts serialize"))
            }
            PromptTask::FixAnnotation => self.stub_fix(&input),
        }
    }

    fn score_consistency(&self, analysis: &str, scores: &CanonicalScores) -> Result<f64, ClientError> {
        let base = implied_score(analysis).unwrap_or_else(|| scores.mean());
        let jitter = (self.unit_hash(analysis) * 2.0 - 1.0) * self.jitter;
        Ok((base + jitter).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_envelope_round_trips() {
        let p = build_prompt(PromptTask::FixAnnotation, "do it", &json!({"a": 1}));
        let (task, input) = parse_prompt(&p).unwrap();
        assert_eq!(task, PromptTask::FixAnnotation);
        assert_eq!(input, json!({"a": 1}));
        assert!(parse_prompt("hello").is_none());
    }

    #[test]
    fn implied_score_reads_numbers_then_levels() {
        let a = lexicon::describe_scores(Kind::Task, [0.8, 0.6, 0.4, 0.2, 1.0]);
        assert!((implied_score(&a).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(implied_score("high and low"), Some(0.5));
        assert_eq!(implied_score("nothing"), None);
    }

    #[test]
    fn stub_is_deterministic_and_seed_sensitive() {
        let s = CanonicalScores::splat(0.5);
        let a = StubClient::new(1).score_consistency("no numbers", &s).unwrap();
        let b = StubClient::new(1).score_consistency("no numbers", &s).unwrap();
        assert_eq!(a, b);
        assert!((a - 0.5).abs() <= 0.02);
        let c = StubClient::new(2).score_consistency("no numbers", &s).unwrap();
        assert_ne!(a, c);
    }
}
