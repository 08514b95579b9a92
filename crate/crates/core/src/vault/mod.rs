//! Note store, embedding index and snapshot persistence.

pub mod embed;
pub mod persist;
pub mod store;

pub use embed::{cosine, Embedder, EmbeddingRecord};
pub use persist::{load, load_with_fallback, persist, PersistError};
pub use store::{NoteFilter, NoteRecord, PredictedLabels, Vault, VaultError, VaultState};
