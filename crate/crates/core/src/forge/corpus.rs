//! Corpus entries and the line-delimited corpus file format.
//!
//! One JSON object per line: the note's flat fields plus a `concepts` array.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::concept::{gold_labels, Concept};
use crate::note::Note;
use crate::taxonomy::LabelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    #[serde(flatten)]
    pub note: Note,
    #[serde(default)]
    pub concepts: Vec<Concept>,
}

impl CorpusEntry {
    pub fn new(note: Note, concepts: Vec<Concept>) -> Self {
        CorpusEntry { note, concepts }
    }

    pub fn gold(&self) -> LabelSet {
        gold_labels(&self.concepts)
    }
}

pub type Corpus = Vec<CorpusEntry>;

#[derive(Debug, thiserror::Error)]
pub enum CorpusIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn write_corpus<W: Write>(mut out: W, corpus: &[CorpusEntry]) -> Result<(), CorpusIoError> {
    for entry in corpus {
        serde_json::to_writer(&mut out, entry).map_err(|source| CorpusIoError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn corpus_to_string(corpus: &[CorpusEntry]) -> String {
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus).expect("in-memory write");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Strict reader for files in this crate's own format. Use
/// [`crate::forge::ingest`] for external or drifting schemas.
pub fn read_corpus<R: BufRead>(input: R) -> Result<Corpus, CorpusIoError> {
    let mut corpus = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|source| CorpusIoError::Json { line: i + 1, source })?;
        corpus.push(entry);
    }
    Ok(corpus)
}

/// Note-level training pairs: gold labels are unions of QA-passed concept kinds.
/// Notes with an empty gold set are skipped.
pub fn labeled_notes(corpus: &[CorpusEntry]) -> Vec<(Note, LabelSet)> {
    corpus
        .iter()
        .filter_map(|e| {
            let gold = e.gold();
            (!gold.is_empty()).then(|| (e.note.clone(), gold))
        })
        .collect()
}
