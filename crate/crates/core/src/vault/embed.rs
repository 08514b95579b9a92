//! Dense note embeddings by sparse random projection.
//!
//! Only the n-gram block of the router's feature vector is projected, so the
//! same text written by two personas embeds identically. Component `j` of the
//! projection of feature `i` is `±1/sqrt(d)`, its sign drawn from
//! `splitmix64` seeded by `(seed, i)`. The result is L2-normalized; an empty
//! projection maps to the unit vector on axis 0 and is flagged.

use serde::{Deserialize, Serialize};

use crate::hash::splitmix64;
use crate::note::{Note, NoteId};
use crate::router::features::{featurize_text, FeatureSpec, FeatureVector, IdfTable};
use crate::router::model::RouterModel;

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_SEED: u64 = 0x6e6f_7465_6261_72;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub note_id: NoteId,
    pub vector: Vec<f64>,
    /// The note had no n-gram features; `vector` is the reserved axis.
    #[serde(default)]
    pub zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedder {
    pub dim: usize,
    pub seed: u64,
    pub spec: FeatureSpec,
    pub idf: Option<IdfTable>,
}

impl Embedder {
    pub fn new(spec: FeatureSpec, idf: Option<IdfTable>, dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        Embedder { dim, seed, spec, idf }
    }

    pub fn from_model(model: &RouterModel) -> Self {
        Embedder::new(model.spec.clone(), model.idf.clone(), DEFAULT_DIM, DEFAULT_SEED)
    }

    pub fn project(&self, x: &FeatureVector) -> (Vec<f64>, bool) {
        let scale = 1.0 / (self.dim as f64).sqrt();
        let mut out = vec![0.0; self.dim];
        for (idx, v) in &x.entries {
            if *idx as usize >= self.spec.hash_dims {
                continue;
            }
            let mut state = self.seed ^ (*idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let mut bits = 0u64;
            for (j, o) in out.iter_mut().enumerate() {
                if j % 64 == 0 {
                    bits = splitmix64(&mut state);
                }
                let sign = if bits >> (j % 64) & 1 == 1 { 1.0 } else { -1.0 };
                *o += sign * scale * v;
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            let mut axis = vec![0.0; self.dim];
            axis[0] = 1.0;
            return (axis, true);
        }
        out.iter_mut().for_each(|v| *v /= norm);
        (out, false)
    }

    pub fn embed(&self, note: &Note) -> EmbeddingRecord {
        let x = featurize_text(note.content(), note.persona, &self.spec, self.idf.as_ref());
        let (vector, zero) = self.project(&x);
        EmbeddingRecord {
            note_id: note.id.clone(),
            vector,
            zero,
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
