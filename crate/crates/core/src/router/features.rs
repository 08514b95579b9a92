//! Hashed n-gram features with an optional persona block.
//!
//! Tokens are maximal runs of alphanumeric characters, lowercased. An n-gram
//! is its tokens joined by a single space and hashed with 64-bit FNV-1a; the
//! bucket is `hash & (hash_dims - 1)`. Bucket values are raw counts, optionally
//! multiplied by a smoothed IDF frozen at training time, and the n-gram block is
//! L2-normalized. With persona conditioning, slot `hash_dims + persona.index()`
//! holds 1.0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a64;
use crate::note::{Note, Persona};

pub const PERSONA_SLOTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub ngram_orders: Vec<usize>,
    pub hash_dims: usize,
    pub use_tfidf: bool,
    pub persona_conditioning: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            ngram_orders: vec![1, 2],
            hash_dims: 1 << 18,
            use_tfidf: false,
            persona_conditioning: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("hash_dims must be a power of two >= 1024, got {0}")]
    HashDims(usize),
    #[error("ngram_orders must be nonempty and positive")]
    Orders,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.hash_dims < 1 << 10 || !self.hash_dims.is_power_of_two() || self.hash_dims > 1 << 31 {
            return Err(SpecError::HashDims(self.hash_dims));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(SpecError::Orders);
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.hash_dims + if self.persona_conditioning { PERSONA_SLOTS } else { 0 }
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|(i, v)| w[*i as usize] * v).sum()
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn ngrams(tokens: &[String], orders: &[usize]) -> Vec<String> {
    let mut out = Vec::new();
    for &n in orders {
        if n == 0 || tokens.len() < n {
            continue;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

pub fn bucket(gram: &str, hash_dims: usize) -> u32 {
    (fnv1a64(gram.as_bytes()) & (hash_dims as u64 - 1)) as u32
}

/// Raw n-gram bucket counts of a text.
pub fn term_counts(text: &str, spec: &FeatureSpec) -> BTreeMap<u32, f64> {
    let mut counts = BTreeMap::new();
    for g in ngrams(&tokenize(text), &spec.ngram_orders) {
        *counts.entry(bucket(&g, spec.hash_dims)).or_insert(0.0) += 1.0;
    }
    counts
}

/// Document frequencies frozen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub n_docs: u32,
    pub df: BTreeMap<u32, u32>,
}

impl IdfTable {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, spec: &FeatureSpec) -> Self {
        let mut df = BTreeMap::new();
        let mut n_docs = 0;
        for t in texts {
            n_docs += 1;
            for b in term_counts(t, spec).into_keys() {
                *df.entry(b).or_insert(0) += 1;
            }
        }
        IdfTable { n_docs, df }
    }

    /// Smoothed IDF: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, bucket: u32) -> f64 {
        let df = self.df.get(&bucket).copied().unwrap_or(0) as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }
}

pub fn featurize_text(text: &str, persona: Persona, spec: &FeatureSpec, idf: Option<&IdfTable>) -> FeatureVector {
    let mut counts = term_counts(text, spec);
    if let (true, Some(idf)) = (spec.use_tfidf, idf) {
        for (b, v) in counts.iter_mut() {
            *v *= idf.idf(*b);
        }
    }
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut entries: Vec<(u32, f64)> = counts.into_iter().map(|(b, v)| (b, v / norm)).collect();
    if spec.persona_conditioning {
        entries.push(((spec.hash_dims + persona.index()) as u32, 1.0));
    }
    FeatureVector {
        dim: spec.dimension(),
        entries,
    }
}

pub fn featurize(note: &Note, spec: &FeatureSpec) -> FeatureVector {
    featurize_text(note.content(), note.persona, spec, None)
}
