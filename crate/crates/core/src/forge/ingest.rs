//! Ingestion of externally produced note/concept datasets.
//!
//! External field names are mapped onto [`Note`] and [`Concept`] through a
//! [`FieldMapping`]. Keys may be dotted paths into nested objects
//! (`"meta.date"`). Records that cannot be mapped are reported with their line
//! number; ingestion aborts only when more than half of the records fail.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::concept::{CanonicalScores, Concept, QaStatus};
use crate::forge::corpus::{Corpus, CorpusEntry};
use crate::note::{parse_date, parse_note_with_id, parse_time, Note, NoteHeader, NoteId, Persona};
use crate::taxonomy::Kind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConceptMapping {
    pub id: String,
    pub kind: String,
    pub summary: String,
    pub entities: String,
    pub analysis: String,
    /// Object holding the five score dimensions by their canonical names.
    pub scores: String,
    pub qa_status: String,
    pub cognitive_state: String,
}

impl Default for ConceptMapping {
    fn default() -> Self {
        ConceptMapping {
            id: "id".into(),
            kind: "kind".into(),
            summary: "summary".into(),
            entities: "entities".into(),
            analysis: "analysis".into(),
            scores: "scores".into(),
            qa_status: "qa_status".into(),
            cognitive_state: "cognitive_state".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    pub id: String,
    pub persona: String,
    /// When set, the note is parsed from this bracketed text field and the
    /// separate header/content keys are ignored.
    pub text: Option<String>,
    pub date: String,
    pub time: String,
    pub location: String,
    pub device: String,
    pub weather: String,
    pub content: String,
    pub concepts: String,
    pub concept: ConceptMapping,
    /// Status assumed for concepts that carry no status field.
    pub default_status: QaStatus,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            id: "id".into(),
            persona: "persona".into(),
            text: None,
            date: "date".into(),
            time: "time".into(),
            location: "location".into(),
            device: "device".into(),
            weather: "weather".into(),
            content: "content".into(),
            concepts: "concepts".into(),
            concept: ConceptMapping::default(),
            default_status: QaStatus::Passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("line {line}: {reason}")]
pub struct IngestError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestFatal {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid mapping config: {0}")]
    Mapping(String),
    #[error("line {line}: input is not valid JSON: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{failed} of {total} records failed to ingest; first: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: IngestError,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestOutcome {
    pub corpus: Corpus,
    pub errors: Vec<IngestError>,
}

pub fn load_mapping(path: &Path) -> Result<FieldMapping, IngestFatal> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IngestFatal::Mapping(e.to_string()))
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.')
        .try_fold(v, |cur, key| cur.get(key))
        .filter(|v| !v.is_null())
}

fn get_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, String> {
    match lookup(v, path) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(format!("field {path:?} is not a string: {other}")),
        None => Err(format!("missing field {path:?}")),
    }
}

fn opt_str(v: &Value, path: &str) -> Result<Option<String>, String> {
    match lookup(v, path) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(format!("field {path:?} is not a string: {other}")),
    }
}

fn map_status(v: Option<&Value>, default: QaStatus) -> Result<QaStatus, String> {
    match v {
        None => Ok(default),
        Some(Value::Bool(true)) => Ok(QaStatus::Passed),
        Some(Value::Bool(false)) => Ok(QaStatus::Failed),
        Some(Value::String(s)) => match s.to_ascii_lowercase().as_str() {
            "passed" | "pass" | "valid" | "ok" => Ok(QaStatus::Passed),
            "failed" | "fail" | "invalid" => Ok(QaStatus::Failed),
            "flagged" | "flag" => Ok(QaStatus::Flagged),
            "pending" => Ok(QaStatus::Pending),
            _ => Err(format!("unknown qa status {s:?}")),
        },
        Some(other) => Err(format!("unknown qa status {other}")),
    }
}

fn map_concept(
    v: &Value,
    m: &ConceptMapping,
    note: &Note,
    ordinal: usize,
    default: QaStatus,
) -> Result<Concept, String> {
    let kind_str = get_str(v, &m.kind)?;
    let kind: Kind = kind_str.parse().map_err(|_| format!("unknown kind {kind_str:?}"))?;
    let entities = match lookup(v, &m.entities) {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|e| {
                e.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| format!("entity {e} is not a string"))
            })
            .collect::<Result<_, _>>()?,
        Some(other) => return Err(format!("entities is not a list: {other}")),
    };
    let scores = match lookup(v, &m.scores) {
        None => CanonicalScores::splat(0.0),
        Some(Value::Object(obj)) => {
            let mut vals = [0.0; 5];
            for (slot, name) in vals.iter_mut().zip(CanonicalScores::NAMES) {
                *slot = match obj.get(name) {
                    None | Some(Value::Null) => 0.0,
                    Some(x) => x.as_f64().ok_or_else(|| format!("score {name} is not a number: {x}"))?,
                };
            }
            CanonicalScores::from_array(vals)
        }
        Some(other) => return Err(format!("scores is not an object: {other}")),
    };
    Ok(Concept {
        id: opt_str(v, &m.id)?.unwrap_or_else(|| format!("{}#c{ordinal}", note.id)),
        note_id: note.id.clone(),
        kind,
        summary: opt_str(v, &m.summary)?.unwrap_or_default(),
        entities,
        analysis: opt_str(v, &m.analysis)?.unwrap_or_default(),
        scores,
        qa_status: map_status(lookup(v, &m.qa_status), default)?,
        cognitive_state: opt_str(v, &m.cognitive_state)?,
    })
}

/// Map one external record onto a corpus entry.
pub fn map_record(v: &Value, m: &FieldMapping, line: usize) -> Result<CorpusEntry, String> {
    if !v.is_object() {
        return Err("record is not an object".into());
    }
    let persona_str = get_str(v, &m.persona)?;
    let persona: Persona = persona_str
        .parse()
        .map_err(|_| format!("unknown persona {persona_str:?}"))?;
    let id = match lookup(v, &m.id) {
        Some(Value::String(s)) => NoteId::new(s.clone()),
        Some(Value::Number(n)) => NoteId::new(n.to_string()),
        Some(other) => return Err(format!("id is not a string: {other}")),
        None => NoteId::new(format!("line-{line}")),
    };
    let note = match &m.text {
        Some(text_key) => {
            let text = get_str(v, text_key)?;
            parse_note_with_id(text, persona, id).map_err(|e| e.to_string())?
        }
        None => {
            let date_s = get_str(v, &m.date)?;
            let time_s = get_str(v, &m.time)?;
            let date = parse_date(date_s).ok_or_else(|| format!("invalid date {date_s:?}"))?;
            let time = parse_time(time_s).ok_or_else(|| format!("invalid time {time_s:?}"))?;
            let header = NoteHeader::new(
                date,
                time,
                get_str(v, &m.location)?,
                get_str(v, &m.device)?,
                get_str(v, &m.weather)?,
            )
            .map_err(|e| e.to_string())?;
            Note::new(id, persona, header, get_str(v, &m.content)?).map_err(|e| e.to_string())?
        }
    };
    let concepts = match lookup(v, &m.concepts) {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, c)| map_concept(c, &m.concept, &note, i + 1, m.default_status))
            .collect::<Result<_, _>>()?,
        Some(other) => return Err(format!("concepts is not a list: {other}")),
    };
    Ok(CorpusEntry::new(note, concepts))
}

fn line_of(text: &str, byte: usize) -> usize {
    text.as_bytes()[..byte].iter().filter(|b| **b == b'\n').count() + 1
}

/// Split input into `(line, value)` records. Accepts line-delimited JSON or a
/// single top-level array.
fn records(text: &str) -> Result<Vec<(usize, Result<Value, String>)>, IngestFatal> {
    let start = text.len() - text.trim_start().len();
    if !text[start..].starts_with('[') {
        return Ok(text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
            .collect());
    }
    let mut out = Vec::new();
    let mut pos = start + 1;
    loop {
        let rest = &text[pos..];
        let skipped = rest.len() - rest.trim_start_matches(|c: char| c.is_whitespace() || c == ',').len();
        pos += skipped;
        match text[pos..].chars().next() {
            None => {
                return Err(IngestFatal::Syntax {
                    line: line_of(text, pos),
                    reason: "unterminated array".into(),
                })
            }
            Some(']') => break,
            Some(_) => {}
        }
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v)) => {
                out.push((line_of(text, pos), Ok(v)));
                pos += stream.byte_offset();
            }
            Some(Err(e)) => {
                return Err(IngestFatal::Syntax {
                    line: line_of(text, pos) + e.line() - 1,
                    reason: e.to_string(),
                })
            }
            None => break,
        }
    }
    Ok(out)
}

pub fn ingest_str(text: &str, mapping: &FieldMapping) -> Result<IngestOutcome, IngestFatal> {
    let recs = records(text)?;
    let total = recs.len();
    let mut outcome = IngestOutcome::default();
    for (line, rec) in recs {
        match rec.and_then(|v| map_record(&v, mapping, line)) {
            Ok(entry) => outcome.corpus.push(entry),
            Err(reason) => outcome.errors.push(IngestError { line, reason }),
        }
    }
    if outcome.errors.len() * 2 > total {
        return Err(IngestFatal::TooManyFailures {
            failed: outcome.errors.len(),
            total,
            first: outcome.errors[0].clone(),
        });
    }
    Ok(outcome)
}

pub fn ingest_dataset(path: &Path, mapping: &FieldMapping) -> Result<IngestOutcome, IngestFatal> {
    let text = std::fs::read_to_string(path)?;
    ingest_str(&text, mapping)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"id":"a","persona":"INFP","date":"2023-08-14","time":"19:45","location":"Navy Pier","device":"iPhone 15","weather":"Clear","content":"Walked by the lake.","concepts":[{"kind":"insight","summary":"walk","entities":[],"analysis":"","scores":{"telos":0.5,"logos":0.5,"ethos":0.5,"pathos":0.5,"kairos":0.5}}]}"#;

    #[test]
    fn empty_input_is_empty_corpus() {
        let out = ingest_str("", &FieldMapping::default()).unwrap();
        assert!(out.corpus.is_empty() && out.errors.is_empty());
        let out = ingest_str(" [ ] ", &FieldMapping::default()).unwrap();
        assert!(out.corpus.is_empty());
    }

    #[test]
    fn unknown_kind_is_named() {
        let bad = GOOD.replace("\"insight\"", "\"todo\"");
        let out = ingest_str(&format!("{GOOD}\n{GOOD}\n{bad}\n"), &FieldMapping::default()).unwrap();
        assert_eq!(out.corpus.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 3);
        assert!(out.errors[0].reason.contains("\"todo\""));
    }

    #[test]
    fn majority_failure_is_fatal() {
        let bad = GOOD.replace("INFP", "XXXX");
        let err = ingest_str(&format!("{GOOD}\n{bad}\n{bad}\n"), &FieldMapping::default()).unwrap_err();
        assert!(matches!(
            err,
            IngestFatal::TooManyFailures {
                failed: 2,
                total: 3,
                ..
            }
        ));
    }

    #[test]
    fn array_form_reports_lines() {
        let bad = GOOD.replace("2023-08-14", "2023-13-01");
        let text = format!("[\n{GOOD},\n{GOOD},\n{bad}\n]");
        let out = ingest_str(&text, &FieldMapping::default()).unwrap();
        assert_eq!(out.corpus.len(), 2);
        assert_eq!(out.errors[0].line, 4);
        assert!(matches!(
            ingest_str("[ {\"a\": ", &FieldMapping::default()),
            Err(IngestFatal::Syntax { .. })
        ));
    }

    #[test]
    fn mapping_renames_and_nests() {
        let rec = r#"{"uid":7,"mbti":"entj","meta":{"text":"[2023-08-14][09:00][Office][Laptop][Rain] Finish the report by Friday."},
            "annotations":[{"type":"task","valid":false}]}"#
            .replace('\n', " ");
        let m = FieldMapping {
            id: "uid".into(),
            persona: "mbti".into(),
            text: Some("meta.text".into()),
            concepts: "annotations".into(),
            concept: ConceptMapping {
                kind: "type".into(),
                qa_status: "valid".into(),
                ..Default::default()
            },
            ..Default::default()
        };
        let out = ingest_str(&rec, &m).unwrap();
        let e = &out.corpus[0];
        assert_eq!(e.note.id.as_str(), "7");
        assert_eq!(e.note.persona, Persona::Entj);
        assert_eq!(e.concepts[0].kind, Kind::Task);
        assert_eq!(e.concepts[0].qa_status, QaStatus::Failed);
        assert_eq!(e.concepts[0].id, "7#c1");
    }

    #[test]
    fn mapping_config_parses_partial_json() {
        let m: FieldMapping = serde_json::from_str(r#"{"persona":"mbti","concept":{"kind":"type"}}"#).unwrap();
        assert_eq!(m.persona, "mbti");
        assert_eq!(m.concept.kind, "type");
        assert_eq!(m.concept.summary, "summary");
    }
}
