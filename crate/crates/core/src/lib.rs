//! Persona-conditioned note understanding: a typed note model, a synthetic
//! corpus forge with annotation QA, a multi-label kind router, evaluation,
//! a retrieval vault and a feedback-driven suggestion orchestrator.

pub mod concept;
pub mod eval;
pub mod forge;
pub mod hash;
pub mod note;
pub mod orchestrator;
pub mod router;
pub mod taxonomy;
pub mod vault;

pub use concept::{CanonicalScores, Concept, QaStatus};
pub use note::{Note, NoteHeader, NoteId, Persona};
pub use taxonomy::{Kind, KindScores, LabelSet};
