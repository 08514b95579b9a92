//! In-process document store and vector index with snapshot isolation.
//!
//! All state lives in an immutable [`VaultState`] behind `RwLock<Arc<_>>`.
//! Readers clone the `Arc` and never observe a partial write. Writers are
//! serialized by a mutex, build a modified copy, and publish it by swapping
//! the pointer; every published write bumps the version.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

use crate::concept::{gold_labels, Concept};
use crate::note::{Note, NoteId, Persona};
use crate::taxonomy::{Kind, LabelSet};
use crate::vault::embed::{cosine, Embedder, EmbeddingRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedLabels {
    pub labels: LabelSet,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note: Note,
    pub concepts: Vec<Concept>,
    pub predicted: Option<PredictedLabels>,
    pub created_at: DateTime<Utc>,
}

impl NoteRecord {
    pub fn new(note: Note, concepts: Vec<Concept>, predicted: Option<PredictedLabels>) -> Self {
        NoteRecord {
            note,
            concepts,
            predicted,
            created_at: Utc::now(),
        }
    }

    /// Predicted kinds together with the kinds of QA-passed concepts.
    pub fn kinds(&self) -> LabelSet {
        let predicted = self.predicted.map_or(LabelSet::EMPTY, |p| p.labels);
        predicted.union(gold_labels(&self.concepts))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoteFilter {
    pub persona: Option<Persona>,
    pub kind: Option<Kind>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl NoteFilter {
    pub fn matches(&self, r: &NoteRecord) -> bool {
        let d = r.note.header.date;
        self.persona.is_none_or(|p| r.note.persona == p)
            && self.kind.is_none_or(|k| r.kinds().contains(k))
            && self.from.is_none_or(|f| d >= f)
            && self.to.is_none_or(|t| d <= t)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VaultError {
    #[error("note {0} not found")]
    NotFound(NoteId),
    #[error("note {0} already exists")]
    Conflict(NoteId),
    #[error("labels reference unknown model version {0}")]
    UnknownModelVersion(u64),
    #[error("the index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("vector has dimension {got}, index uses {expected}")]
    Dimension { expected: usize, got: usize },
}

type ChronoKey = (NaiveDate, NaiveTime, NoteId);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaultState {
    pub version: u64,
    pub embedder: Embedder,
    pub model_versions: BTreeSet<u64>,
    pub notes: BTreeMap<NoteId, Arc<NoteRecord>>,
    pub embeddings: BTreeMap<NoteId, Arc<EmbeddingRecord>>,
    #[serde(skip)]
    order: BTreeSet<ChronoKey>,
}

impl VaultState {
    pub fn new(embedder: Embedder) -> Self {
        VaultState {
            version: 0,
            embedder,
            model_versions: BTreeSet::new(),
            notes: BTreeMap::new(),
            embeddings: BTreeMap::new(),
            order: BTreeSet::new(),
        }
    }

    pub(crate) fn rebuild_order(&mut self) {
        self.order = self
            .notes
            .values()
            .map(|r| (r.note.header.date, r.note.header.time, r.note.id.clone()))
            .collect();
    }

    pub fn get(&self, id: &NoteId) -> Result<&NoteRecord, VaultError> {
        self.notes
            .get(id)
            .map(|r| r.as_ref())
            .ok_or_else(|| VaultError::NotFound(id.clone()))
    }

    /// Records matching `filter`, ordered by (date, time, id).
    pub fn list(&self, filter: &NoteFilter) -> Vec<&NoteRecord> {
        self.order
            .iter()
            .map(|(_, _, id)| self.notes[id].as_ref())
            .filter(|r| filter.matches(r))
            .collect()
    }

    /// Exact top-k by cosine, descending, ties by ascending note id.
    pub fn search_vector(&self, query: &[f64], k: usize) -> Result<Vec<(NoteId, f64)>, VaultError> {
        if k == 0 {
            return Err(VaultError::InvalidK);
        }
        if self.embeddings.is_empty() {
            return Err(VaultError::EmptyIndex);
        }
        if query.len() != self.embedder.dim {
            return Err(VaultError::Dimension {
                expected: self.embedder.dim,
                got: query.len(),
            });
        }
        let mut scored: Vec<(NoteId, f64)> = self
            .embeddings
            .values()
            .map(|e| (e.note_id.clone(), cosine(query, &e.vector)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }

    pub fn search_note(&self, note: &Note, k: usize) -> Result<Vec<(NoteId, f64)>, VaultError> {
        self.search_vector(&self.embedder.embed(note).vector, k)
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }
}

pub struct Vault {
    state: RwLock<Arc<VaultState>>,
    writer: Mutex<()>,
}

impl Vault {
    pub fn new(embedder: Embedder) -> Self {
        Vault::from_state(VaultState::new(embedder))
    }

    pub fn from_state(mut state: VaultState) -> Self {
        state.rebuild_order();
        Vault {
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<VaultState> {
        self.state.read().expect("vault lock").clone()
    }

    /// Apply `f` to a copy of the current state and publish it if `f` succeeds.
    fn write<T>(&self, f: impl FnOnce(&mut VaultState) -> Result<T, VaultError>) -> Result<T, VaultError> {
        let _guard = self.writer.lock().expect("vault writer");
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        next.version += 1;
        *self.state.write().expect("vault lock") = Arc::new(next);
        Ok(out)
    }

    pub fn register_model_version(&self, version: u64) -> u64 {
        self.write(|s| {
            s.model_versions.insert(version);
            Ok(s.version + 1)
        })
        .expect("infallible")
    }

    fn insert(s: &mut VaultState, record: NoteRecord) -> Result<NoteId, VaultError> {
        let id = record.note.id.clone();
        if s.notes.contains_key(&id) {
            return Err(VaultError::Conflict(id));
        }
        if let Some(p) = record.predicted {
            if !s.model_versions.contains(&p.model_version) {
                return Err(VaultError::UnknownModelVersion(p.model_version));
            }
        }
        let emb = s.embedder.embed(&record.note);
        s.order
            .insert((record.note.header.date, record.note.header.time, id.clone()));
        s.embeddings.insert(id.clone(), Arc::new(emb));
        s.notes.insert(id.clone(), Arc::new(record));
        Ok(id)
    }

    /// Store a note and index its embedding.
    pub fn put_note(&self, record: NoteRecord) -> Result<NoteId, VaultError> {
        self.write(|s| Self::insert(s, record))
    }

    /// All-or-nothing bulk insert.
    pub fn put_notes(&self, records: Vec<NoteRecord>) -> Result<Vec<NoteId>, VaultError> {
        self.write(|s| records.into_iter().map(|r| Self::insert(s, r)).collect())
    }

    pub fn set_predicted(&self, id: &NoteId, predicted: PredictedLabels) -> Result<(), VaultError> {
        self.write(|s| {
            if !s.model_versions.contains(&predicted.model_version) {
                return Err(VaultError::UnknownModelVersion(predicted.model_version));
            }
            let rec = s.notes.get_mut(id).ok_or_else(|| VaultError::NotFound(id.clone()))?;
            Arc::make_mut(rec).predicted = Some(predicted);
            Ok(())
        })
    }

    /// Replace stored embeddings, e.g. vectors from an external encoder.
    /// Vectors are L2-normalized on the way in.
    pub fn import_embeddings(&self, records: Vec<EmbeddingRecord>) -> Result<usize, VaultError> {
        self.write(|s| {
            let n = records.len();
            for mut r in records {
                if r.vector.len() != s.embedder.dim {
                    return Err(VaultError::Dimension {
                        expected: s.embedder.dim,
                        got: r.vector.len(),
                    });
                }
                if !s.notes.contains_key(&r.note_id) {
                    return Err(VaultError::NotFound(r.note_id));
                }
                let norm = r.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    r.vector.iter_mut().for_each(|v| *v /= norm);
                }
                s.embeddings.insert(r.note_id.clone(), Arc::new(r));
            }
            Ok(n)
        })
    }

    pub fn get_note(&self, id: &NoteId) -> Result<NoteRecord, VaultError> {
        self.snapshot().get(id).cloned()
    }

    pub fn list_notes(&self, filter: &NoteFilter) -> Vec<NoteRecord> {
        self.snapshot().list(filter).into_iter().cloned().collect()
    }

    pub fn search_topk(&self, query: &[f64], k: usize) -> Result<Vec<(NoteId, f64)>, VaultError> {
        self.snapshot().search_vector(query, k)
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version
    }
}
