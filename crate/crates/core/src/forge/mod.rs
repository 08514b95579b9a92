//! Synthetic corpus generation, annotation QA, dataset ingestion and statistics.

pub mod client;
pub mod corpus;
pub mod generate;
pub mod ingest;
pub mod lexicon;
pub mod profile;
pub mod qa;
pub mod route;
pub mod stats;

pub use client::{ClientError, StubClient, TextClient};
pub use corpus::{Corpus, CorpusEntry};
pub use stats::{corpus_stats, CorpusStats};
