//! Concept annotations attached to notes.

use serde::{Deserialize, Serialize};

use crate::note::NoteId;
use crate::taxonomy::{Kind, LabelSet};

/// Five rhetorical scores, each in `[0, 1]` once a concept has passed QA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalScores {
    pub telos: f64,
    pub logos: f64,
    pub ethos: f64,
    pub pathos: f64,
    pub kairos: f64,
}

impl CanonicalScores {
    pub const NAMES: [&'static str; 5] = ["telos", "logos", "ethos", "pathos", "kairos"];

    pub fn splat(v: f64) -> Self {
        CanonicalScores {
            telos: v,
            logos: v,
            ethos: v,
            pathos: v,
            kairos: v,
        }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        CanonicalScores {
            telos: a[0],
            logos: a[1],
            ethos: a[2],
            pathos: a[3],
            kairos: a[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.telos, self.logos, self.ethos, self.pathos, self.kairos]
    }

    pub fn mean(self) -> f64 {
        self.to_array().iter().sum::<f64>() / 5.0
    }

    pub fn in_unit_range(self) -> bool {
        self.to_array().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaStatus {
    #[default]
    Pending,
    Passed,
    Flagged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub note_id: NoteId,
    pub kind: Kind,
    pub summary: String,
    pub entities: Vec<String>,
    pub analysis: String,
    pub scores: CanonicalScores,
    #[serde(default)]
    pub qa_status: QaStatus,
    /// Free-text cognitive state, only filled by an external text client.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cognitive_state: Option<String>,
}

impl Concept {
    /// JSON object form, the shape QA validates.
    pub fn to_record(&self) -> serde_json::Map<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(map)) => map,
            _ => unreachable!("concept serializes to an object"),
        }
    }
}

/// Gold label set of a note: the union of kinds of its QA-passed concepts.
pub fn gold_labels<'a>(concepts: impl IntoIterator<Item = &'a Concept>) -> LabelSet {
    concepts
        .into_iter()
        .filter(|c| c.qa_status == QaStatus::Passed)
        .map(|c| c.kind)
        .collect()
}
