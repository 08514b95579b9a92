use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::concept::QaStatus;
use crate::forge::corpus::CorpusEntry;
use crate::note::Persona;
use crate::taxonomy::Kind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaCounts {
    pub notes: usize,
    pub concepts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub note_count: usize,
    pub concept_count: usize,
    pub qa_passed_count: usize,
    /// `concept_count / note_count`; absent for an empty corpus.
    pub mean_concepts_per_note: Option<f64>,
    pub per_persona: BTreeMap<Persona, PersonaCounts>,
    /// QA-passed concepts per kind; all twenty kinds are present.
    pub per_kind: BTreeMap<Kind, usize>,
    pub notes_without_passed_concepts: usize,
}

pub fn corpus_stats(corpus: &[CorpusEntry]) -> CorpusStats {
    let mut per_kind: BTreeMap<Kind, usize> = Kind::ALL.iter().map(|k| (*k, 0)).collect();
    let mut per_persona: BTreeMap<Persona, PersonaCounts> = BTreeMap::new();
    let mut concept_count = 0;
    let mut qa_passed_count = 0;
    let mut empty = 0;
    for entry in corpus {
        let p = per_persona.entry(entry.note.persona).or_default();
        p.notes += 1;
        p.concepts += entry.concepts.len();
        concept_count += entry.concepts.len();
        let mut any = false;
        for c in entry.concepts.iter().filter(|c| c.qa_status == QaStatus::Passed) {
            *per_kind.get_mut(&c.kind).expect("all kinds present") += 1;
            qa_passed_count += 1;
            any = true;
        }
        if !any {
            empty += 1;
        }
    }
    CorpusStats {
        note_count: corpus.len(),
        concept_count,
        qa_passed_count,
        mean_concepts_per_note: (!corpus.is_empty()).then(|| concept_count as f64 / corpus.len() as f64),
        per_persona,
        per_kind,
        notes_without_passed_concepts: empty,
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "notes: {}", self.note_count)?;
        writeln!(f, "concepts: {}", self.concept_count)?;
        writeln!(f, "qa passed: {}", self.qa_passed_count)?;
        match self.mean_concepts_per_note {
            Some(m) => writeln!(f, "mean concepts per note: {m:.3}")?,
            None => writeln!(f, "mean concepts per note: n/a")?,
        }
        writeln!(f, "{:<16} {:>6} {:>7}", "kind", "count", "share")?;
        for (kind, n) in &self.per_kind {
            let share = if self.qa_passed_count == 0 {
                0.0
            } else {
                100.0 * *n as f64 / self.qa_passed_count as f64
            };
            writeln!(f, "{:<16} {:>6} {:>6.2}%", kind.as_str(), n, share)?;
        }
        Ok(())
    }
}
