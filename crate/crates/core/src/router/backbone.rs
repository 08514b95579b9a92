//! Backbone boundary: the native featurizer or externally computed
//! per-kind probabilities (e.g. scores from a fine-tuned encoder).
//!
//! External files are line-delimited JSON records
//! `{"note_id": "...", "probabilities": ...}` where `probabilities` is either a
//! map from kind name to probability or a list of twenty values in taxonomy
//! order.

use std::collections::HashMap;
use std::io::BufRead;

use serde::Deserialize;

use crate::note::{Note, NoteId};
use crate::router::features::FeatureVector;
use crate::router::model::RouterModel;
use crate::taxonomy::KindScores;

#[derive(Debug, Clone, PartialEq)]
pub enum BackboneOutput {
    Features(FeatureVector),
    Probabilities(KindScores),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackboneError {
    #[error("no probabilities for note {0}")]
    MissingNote(NoteId),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

pub trait BackboneProvider: Send + Sync {
    fn encode(&self, note: &Note) -> Result<BackboneOutput, BackboneError>;
}

/// The router's own hashed n-gram featurizer.
pub struct NativeBackbone<'a> {
    pub model: &'a RouterModel,
}

impl BackboneProvider for NativeBackbone<'_> {
    fn encode(&self, note: &Note) -> Result<BackboneOutput, BackboneError> {
        Ok(BackboneOutput::Features(self.model.featurize(note)))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalProbabilities {
    pub by_note: HashMap<NoteId, KindScores>,
}

#[derive(Deserialize)]
struct ExternalRecord {
    note_id: NoteId,
    probabilities: KindScores,
}

impl ExternalProbabilities {
    pub fn read<R: BufRead>(input: R) -> Result<Self, BackboneError> {
        let mut by_note = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| BackboneError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| BackboneError::Malformed { line: i + 1, reason };
            let rec: ExternalRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if let Some((k, p)) = rec.probabilities.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
                return Err(malformed(format!("probability {p} for {k} outside [0, 1]")));
            }
            if by_note.insert(rec.note_id.clone(), rec.probabilities).is_some() {
                return Err(malformed(format!("duplicate note id {}", rec.note_id)));
            }
        }
        Ok(ExternalProbabilities { by_note })
    }
}

impl BackboneProvider for ExternalProbabilities {
    fn encode(&self, note: &Note) -> Result<BackboneOutput, BackboneError> {
        self.by_note
            .get(&note.id)
            .map(|p| BackboneOutput::Probabilities(*p))
            .ok_or_else(|| BackboneError::MissingNote(note.id.clone()))
    }
}

/// Per-kind probabilities for `note`: features go through `model`,
/// probabilities pass through unchanged.
pub fn score_note(
    provider: &dyn BackboneProvider,
    model: &RouterModel,
    note: &Note,
) -> Result<KindScores, BackboneError> {
    Ok(match provider.encode(note)? {
        BackboneOutput::Features(x) => model.proba_features(&x),
        BackboneOutput::Probabilities(p) => p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note::{parse_note_with_id, Persona};
    use crate::router::features::FeatureSpec;
    use crate::taxonomy::Kind;

    fn note(id: &str) -> Note {
        parse_note_with_id("[2023-08-14][09:00][a][b][c] x", Persona::Enfj, NoteId::new(id)).unwrap()
    }

    #[test]
    fn external_map_and_list_forms() {
        let list: Vec<String> = (0..20).map(|i| format!("{}", i as f64 / 20.0)).collect();
        let mut map = KindScores::splat(0.0);
        map.set(Kind::Task, 0.9);
        let text = format!(
            "{{\"note_id\":\"a\",\"probabilities\":{}}}\n{{\"note_id\":\"b\",\"probabilities\":[{}]}}\n",
            serde_json::to_string(&map).unwrap(),
            list.join(",")
        );
        let ext = ExternalProbabilities::read(text.as_bytes()).unwrap();
        let m = RouterModel::zeros(FeatureSpec::default());
        let a = score_note(&ext, &m, &note("a")).unwrap();
        assert_eq!(a.get(Kind::Task), 0.9);
        assert_eq!(a.get(Kind::Idea), 0.0);
        let b = score_note(&ext, &m, &note("b")).unwrap();
        assert_eq!(b.get(Kind::Insight), 0.05);
        assert_eq!(
            score_note(&ext, &m, &note("c")),
            Err(BackboneError::MissingNote(NoteId::new("c")))
        );
    }

    #[test]
    fn out_of_range_probability_is_rejected() {
        let mut bad = [0.0; 20];
        bad[0] = 1.5;
        let text = format!("{{\"note_id\":\"a\",\"probabilities\":{bad:?}}}");
        assert!(matches!(
            ExternalProbabilities::read(text.as_bytes()),
            Err(BackboneError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn native_matches_model() {
        let m = RouterModel::zeros(FeatureSpec::default());
        let n = note("a");
        assert_eq!(
            score_note(&NativeBackbone { model: &m }, &m, &n).unwrap(),
            m.predict_proba(&n)
        );
    }
}
