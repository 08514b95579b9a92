//! Two-stage annotation QA.
//!
//! Stage I is rule based and works on raw JSON records: required keys,
//! datatypes, and score ranges (out-of-range scores are clamped and marked
//! corrected). Stage II asks a [`TextClient`] whether the prose analysis agrees
//! with the numeric scores, checks the summary and entities against the note,
//! and routes inconsistent annotations through a fixer that must return a
//! structurally valid record.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::concept::{CanonicalScores, Concept, QaStatus};
use crate::forge::client::{fix_prompt, TextClient};
use crate::note::{Note, NoteId};
use crate::taxonomy::Kind;

/// Discrepancies within this distance of the threshold count as reaching it,
/// so a decimal boundary such as 0.85 - 0.60 is inclusive.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Schema,
    Type,
    Range,
    CanonicalConsistency,
    Plausibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Corrected,
    Flagged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub concept_id: String,
    pub check: Check,
    pub outcome: Outcome,
    pub detail: String,
    /// Tagged for human inspection.
    #[serde(default)]
    pub human_review: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub pass: usize,
    pub corrected: usize,
    pub flagged: usize,
    pub failed: usize,
}

impl OutcomeCounts {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Pass => self.pass += 1,
            Outcome::Corrected => self.corrected += 1,
            Outcome::Flagged => self.flagged += 1,
            Outcome::Failed => self.failed += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.pass + self.corrected + self.flagged + self.failed
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub entries: Vec<CheckResult>,
    pub counts: OutcomeCounts,
}

impl QaReport {
    fn from_entries(entries: Vec<CheckResult>) -> Self {
        let mut counts = OutcomeCounts::default();
        for e in &entries {
            counts.add(e.outcome);
        }
        QaReport { entries, counts }
    }

    pub fn merge(mut self, other: QaReport) -> QaReport {
        self.entries.extend(other.entries);
        QaReport::from_entries(self.entries)
    }

    pub fn for_concept<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a CheckResult> + 'a {
        self.entries.iter().filter(move |e| e.concept_id == id)
    }

    pub fn review_queue(&self) -> impl Iterator<Item = &CheckResult> {
        self.entries.iter().filter(|e| e.human_review)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.outcome == Outcome::Pass)
    }
}

impl fmt::Display for QaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<28} {:<22} {:<10} {:<6} detail",
            "concept", "check", "outcome", "review"
        )?;
        for e in &self.entries {
            let check = serde_json::to_value(e.check).unwrap();
            let outcome = serde_json::to_value(e.outcome).unwrap();
            writeln!(
                f,
                "{:<28} {:<22} {:<10} {:<6} {}",
                e.concept_id,
                check.as_str().unwrap_or_default(),
                outcome.as_str().unwrap_or_default(),
                if e.human_review { "yes" } else { "" },
                e.detail
            )?;
        }
        let c = &self.counts;
        write!(
            f,
            "totals: pass={} corrected={} flagged={} failed={}",
            c.pass, c.corrected, c.flagged, c.failed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QaConfig {
    pub discrepancy_threshold: f64,
    pub autofix_attempts: u32,
    pub stage2_enabled: bool,
    /// Discrepancies this close below the threshold are tagged for review.
    pub review_margin: f64,
    /// Minimum fraction of summary words that must occur in the note.
    pub min_summary_overlap: f64,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            discrepancy_threshold: 0.25,
            autofix_attempts: 1,
            stage2_enabled: true,
            review_margin: 0.05,
            min_summary_overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid QA config: {0}")]
pub struct QaConfigError(String);

impl QaConfig {
    pub fn validate(&self) -> Result<(), QaConfigError> {
        if !(self.discrepancy_threshold > 0.0 && self.discrepancy_threshold < 1.0) {
            return Err(QaConfigError("discrepancy_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

const REQUIRED: [&str; 7] = ["id", "note_id", "kind", "summary", "entities", "analysis", "scores"];

struct Stage1 {
    concept: Concept,
    entries: Vec<CheckResult>,
    structurally_valid: bool,
}

fn concept_id_of(record: &Map<String, Value>, index: usize) -> String {
    record
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("#{index}"))
}

fn check_record(record: &Value, index: usize) -> Stage1 {
    let empty = Map::new();
    let obj = record.as_object().unwrap_or(&empty);
    let cid = concept_id_of(obj, index);
    let entry = |check, outcome, detail: String| CheckResult {
        concept_id: cid.clone(),
        check,
        outcome,
        detail,
        human_review: outcome == Outcome::Failed,
    };
    let mut entries = Vec::with_capacity(3);

    // Schema: required keys, including the five score dimensions.
    let mut missing: Vec<String> = if record.is_object() {
        REQUIRED
            .iter()
            .filter(|k| !obj.contains_key(**k))
            .map(|k| k.to_string())
            .collect()
    } else {
        vec!["<record is not an object>".to_string()]
    };
    if let Some(Value::Object(scores)) = obj.get("scores") {
        missing.extend(
            CanonicalScores::NAMES
                .iter()
                .filter(|n| !scores.contains_key(**n))
                .map(|n| format!("scores.{n}")),
        );
    }
    let schema_ok = missing.is_empty();
    entries.push(if schema_ok {
        entry(Check::Schema, Outcome::Pass, String::new())
    } else {
        entry(
            Check::Schema,
            Outcome::Failed,
            format!("missing: {}", missing.join(", ")),
        )
    });

    // Type: strings, a list of strings, numeric scores, a known kind.
    let mut mismatches = Vec::new();
    for key in ["id", "note_id", "kind", "summary", "analysis"] {
        if let Some(v) = obj.get(key) {
            if !v.is_string() {
                mismatches.push(format!("{key} is not a string"));
            }
        }
    }
    if let Some(Value::String(k)) = obj.get("kind") {
        if k.parse::<Kind>().is_err() {
            mismatches.push(format!("kind {k:?} is not in the taxonomy"));
        }
    }
    match obj.get("entities") {
        Some(Value::Array(items)) if items.iter().all(Value::is_string) => {}
        Some(Value::Array(_)) => mismatches.push("entities contains a non-string".into()),
        Some(_) => mismatches.push("entities is not a list".into()),
        None => {}
    }
    match obj.get("scores") {
        Some(Value::Object(scores)) => {
            for (name, v) in scores {
                if !CanonicalScores::NAMES.contains(&name.as_str()) {
                    continue;
                }
                if !v.is_number() {
                    mismatches.push(format!("scores.{name} is not a number"));
                }
            }
        }
        Some(_) => mismatches.push("scores is not an object".into()),
        None => {}
    }
    if let Some(v) = obj.get("cognitive_state") {
        if !(v.is_string() || v.is_null()) {
            mismatches.push("cognitive_state is not a string".into());
        }
    }
    let type_ok = mismatches.is_empty();
    entries.push(if type_ok {
        entry(Check::Type, Outcome::Pass, String::new())
    } else {
        entry(Check::Type, Outcome::Failed, mismatches.join("; "))
    });

    // Range: clamp numeric scores into [0, 1].
    let score_obj = obj.get("scores").and_then(Value::as_object);
    let mut values = [0.0; 5];
    let mut corrected = Vec::new();
    let mut numeric = 0;
    for (slot, name) in values.iter_mut().zip(CanonicalScores::NAMES) {
        if let Some(v) = score_obj.and_then(|s| s.get(name)).and_then(Value::as_f64) {
            numeric += 1;
            let clamped = v.clamp(0.0, 1.0);
            if clamped != v {
                corrected.push(format!("{name} {v} -> {clamped}"));
            }
            *slot = clamped;
        }
    }
    entries.push(if numeric == 0 {
        entry(Check::Range, Outcome::Failed, "no numeric scores to check".into())
    } else if corrected.is_empty() {
        entry(Check::Range, Outcome::Pass, String::new())
    } else {
        entry(Check::Range, Outcome::Corrected, corrected.join(", "))
    });

    let str_of = |k: &str| obj.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
    let prior_status: QaStatus = obj
        .get("qa_status")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();
    let structurally_valid = schema_ok && type_ok;
    let qa_status = if !structurally_valid {
        QaStatus::Failed
    } else if matches!(prior_status, QaStatus::Failed | QaStatus::Flagged) {
        prior_status
    } else {
        QaStatus::Passed
    };
    let concept = Concept {
        id: cid.clone(),
        note_id: NoteId::new(str_of("note_id")),
        kind: str_of("kind").parse().unwrap_or(Kind::Task),
        summary: str_of("summary"),
        entities: obj
            .get("entities")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
            .unwrap_or_default(),
        analysis: str_of("analysis"),
        scores: CanonicalScores::from_array(values),
        qa_status,
        cognitive_state: obj.get("cognitive_state").and_then(Value::as_str).map(str::to_string),
    };
    Stage1 {
        concept,
        entries,
        structurally_valid,
    }
}

/// Rule-based checks over raw concept records.
///
/// Every record yields a concept (failed ones carry best-effort fields) and
/// exactly three report entries: schema, type, range.
pub fn qa_stage1(records: &[Value]) -> (Vec<Concept>, QaReport) {
    let results: Vec<Stage1> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| check_record(r, i))
        .collect();
    let mut concepts = Vec::with_capacity(results.len());
    let mut entries = Vec::with_capacity(results.len() * 3);
    for r in results {
        concepts.push(r.concept);
        entries.extend(r.entries);
    }
    (concepts, QaReport::from_entries(entries))
}

/// Stage I over already-typed concepts (e.g. generator output).
pub fn qa_stage1_concepts(concepts: &[Concept]) -> (Vec<Concept>, QaReport) {
    let records: Vec<Value> = concepts.iter().map(|c| Value::Object(c.to_record())).collect();
    qa_stage1(&records)
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 3)
        .map(str::to_lowercase)
}

/// Entities must occur in the note; most summary words must too.
fn plausibility(concept: &Concept, note: &Note, min_overlap: f64) -> Result<(), String> {
    let h = &note.header;
    let haystack = format!("{} {} {} {}", note.content(), h.location, h.device, h.weather).to_lowercase();
    let missing: Vec<&str> = concept
        .entities
        .iter()
        .filter(|e| !haystack.contains(&e.to_lowercase()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(format!("entities not found in note: {}", missing.join(", ")));
    }
    let summary: Vec<String> = words(&concept.summary).collect();
    if !summary.is_empty() {
        let content_words: std::collections::HashSet<String> = words(note.content()).collect();
        let hits = summary.iter().filter(|w| content_words.contains(*w)).count();
        let overlap = hits as f64 / summary.len() as f64;
        if overlap < min_overlap {
            return Err(format!("summary overlaps note at {overlap:.2} < {min_overlap:.2}"));
        }
    }
    if !concept.scores.in_unit_range() {
        return Err("scores outside [0, 1]".into());
    }
    Ok(())
}

struct Consistency {
    implied: f64,
    discrepancy: f64,
}

fn consistency(client: &dyn TextClient, concept: &Concept, attempts: u32) -> Result<Consistency, String> {
    let mut last_err = String::new();
    for _ in 0..=attempts {
        match client.score_consistency(&concept.analysis, &concept.scores) {
            Ok(implied) => {
                return Ok(Consistency {
                    implied,
                    discrepancy: (implied - concept.scores.mean()).abs(),
                })
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(last_err)
}

fn reaches(discrepancy: f64, threshold: f64) -> bool {
    discrepancy >= threshold - BOUNDARY_EPS
}

fn stage2_one(
    concept: &Concept,
    note: Option<&Note>,
    client: &dyn TextClient,
    cfg: &QaConfig,
) -> (Concept, Vec<CheckResult>) {
    let mut entries = Vec::new();
    let mut current = concept.clone();
    let entry = |check, outcome, detail: String, human_review| CheckResult {
        concept_id: concept.id.clone(),
        check,
        outcome,
        detail,
        human_review,
    };
    let thr = cfg.discrepancy_threshold;

    match consistency(client, &current, cfg.autofix_attempts) {
        Err(e) => {
            current.qa_status = QaStatus::Flagged;
            entries.push(entry(
                Check::CanonicalConsistency,
                Outcome::Flagged,
                format!("client error after retries: {e}"),
                true,
            ));
        }
        Ok(c) if !reaches(c.discrepancy, thr) => {
            let low_confidence = c.discrepancy >= thr - cfg.review_margin;
            entries.push(entry(
                Check::CanonicalConsistency,
                Outcome::Pass,
                format!("implied {:.3} vs mean {:.3}", c.implied, current.scores.mean()),
                low_confidence,
            ));
        }
        Ok(c) => {
            let reason = format!(
                "discrepancy {:.3} >= {thr} (implied {:.3}, mean {:.3})",
                c.discrepancy,
                c.implied,
                current.scores.mean()
            );
            match autofix(&current, note, client, cfg, &reason) {
                Some(fixed) => {
                    entries.push(entry(
                        Check::CanonicalConsistency,
                        Outcome::Corrected,
                        format!("{reason}; fixed"),
                        false,
                    ));
                    current = fixed;
                }
                None => {
                    current.qa_status = QaStatus::Flagged;
                    entries.push(entry(Check::CanonicalConsistency, Outcome::Flagged, reason, true));
                }
            }
        }
    }

    match note {
        None => {
            current.qa_status = QaStatus::Flagged;
            entries.push(entry(
                Check::Plausibility,
                Outcome::Flagged,
                format!("note {} not found", concept.note_id),
                true,
            ));
        }
        Some(note) => match plausibility(&current, note, cfg.min_summary_overlap) {
            Ok(()) => entries.push(entry(Check::Plausibility, Outcome::Pass, String::new(), false)),
            Err(detail) => {
                current.qa_status = QaStatus::Flagged;
                entries.push(entry(Check::Plausibility, Outcome::Flagged, detail, true));
            }
        },
    }
    (current, entries)
}

/// Ask the client for a corrected annotation; accept only records that pass
/// Stage I and no longer reach the discrepancy threshold.
fn autofix(
    concept: &Concept,
    note: Option<&Note>,
    client: &dyn TextClient,
    cfg: &QaConfig,
    reason: &str,
) -> Option<Concept> {
    let record = Value::Object(concept.to_record());
    for _ in 0..cfg.autofix_attempts {
        let Ok(reply) = client.complete(&fix_prompt(&record, reason, note.map(Note::content))) else {
            continue;
        };
        let Ok(Value::Object(mut obj)) = serde_json::from_str::<Value>(reply.trim()) else {
            continue;
        };
        // The fixer may not move a concept to another note or id.
        obj.insert("id".into(), Value::String(concept.id.clone()));
        obj.insert("note_id".into(), Value::String(concept.note_id.0.clone()));
        obj.insert("qa_status".into(), Value::String("pending".into()));
        let checked = check_record(&Value::Object(obj), 0);
        if !checked.structurally_valid {
            continue;
        }
        let fixed = checked.concept;
        match consistency(client, &fixed, 0) {
            Ok(c) if !reaches(c.discrepancy, cfg.discrepancy_threshold) => return Some(fixed),
            _ => continue,
        }
    }
    None
}

/// Consistency and plausibility checks for concepts that passed Stage I.
/// Concepts in any other state pass through without entries.
pub fn qa_stage2(
    concepts: &[Concept],
    notes: &HashMap<NoteId, Note>,
    client: &dyn TextClient,
    cfg: &QaConfig,
) -> (Vec<Concept>, QaReport) {
    let results: Vec<(Concept, Vec<CheckResult>)> = concepts
        .par_iter()
        .map(|c| {
            if c.qa_status != QaStatus::Passed {
                return (c.clone(), Vec::new());
            }
            stage2_one(c, notes.get(&c.note_id), client, cfg)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut entries = Vec::new();
    for (c, e) in results {
        out.push(c);
        entries.extend(e);
    }
    (out, QaReport::from_entries(entries))
}

/// Run both stages over a corpus in place, returning the merged report.
pub fn qa_corpus(
    corpus: &mut [crate::forge::corpus::CorpusEntry],
    client: Option<&dyn TextClient>,
    cfg: &QaConfig,
) -> QaReport {
    let all: Vec<Concept> = corpus.iter().flat_map(|e| e.concepts.iter().cloned()).collect();
    let (mut checked, mut report) = qa_stage1_concepts(&all);
    if let (true, Some(client)) = (cfg.stage2_enabled, client) {
        let notes: HashMap<NoteId, Note> = corpus.iter().map(|e| (e.note.id.clone(), e.note.clone())).collect();
        let (after, r2) = qa_stage2(&checked, &notes, client, cfg);
        checked = after;
        report = report.merge(r2);
    }
    let mut it = checked.into_iter();
    for entry in corpus.iter_mut() {
        for c in entry.concepts.iter_mut() {
            *c = it.next().expect("one result per concept");
        }
    }
    report
}
