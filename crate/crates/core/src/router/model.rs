//! Router model snapshot and its binary file format.
//!
//! Weights are stored sparsely: only feature indices seen during training have
//! rows; every other index has weight zero for all kinds.
//!
//! File layout (little-endian):
//!
//! ```text
//! "NBRM"  u16 format  u32 meta_len  meta_json[meta_len]
//! u32 rows  { u32 index  f64 weight[20] } * rows
//! ```
//!
//! `meta_json` holds the feature spec, IDF table, biases, thresholds and model
//! version. Row indices are strictly increasing.

use std::collections::HashMap;
use std::io::{Cursor, Read};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::note::Note;
use crate::router::features::{featurize_text, FeatureSpec, FeatureVector, IdfTable};
use crate::taxonomy::{Kind, KindScores, LabelSet, KIND_COUNT};

pub const MIN_THRESHOLD: f64 = 0.05;
pub const MAX_THRESHOLD: f64 = 0.95;

const MAGIC: &[u8; 4] = b"NBRM";
pub const FORMAT_VERSION: u16 = 1;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterModel {
    pub spec: FeatureSpec,
    pub idf: Option<IdfTable>,
    pub bias: KindScores,
    pub thresholds: KindScores,
    pub version: u64,
    weights: Arc<Weights>,
}

/// Sparse weight table, shared between model snapshots that differ only in
/// bias or thresholds.
#[derive(Debug, Clone, Default, PartialEq)]
struct Weights {
    features: Vec<u32>,
    rows: Vec<[f64; KIND_COUNT]>,
    row_of: HashMap<u32, usize>,
}

impl RouterModel {
    /// All weights and biases zero, thresholds 0.5, version 0.
    pub fn zeros(spec: FeatureSpec) -> Self {
        RouterModel {
            spec,
            idf: None,
            bias: KindScores::splat(0.0),
            thresholds: KindScores::splat(0.5),
            version: 0,
            weights: Arc::default(),
        }
    }

    /// Build from `(index, per-kind weights)` rows; rows are sorted by index
    /// and all-zero rows dropped.
    pub fn from_rows(spec: FeatureSpec, mut rows: Vec<(u32, [f64; KIND_COUNT])>) -> Self {
        rows.sort_by_key(|r| r.0);
        rows.dedup_by_key(|r| r.0);
        rows.retain(|r| r.1.iter().any(|w| *w != 0.0));
        let mut w = Weights::default();
        for (i, (idx, row)) in rows.into_iter().enumerate() {
            w.features.push(idx);
            w.rows.push(row);
            w.row_of.insert(idx, i);
        }
        RouterModel {
            weights: Arc::new(w),
            ..RouterModel::zeros(spec)
        }
    }

    pub fn weight(&self, kind: Kind, index: u32) -> f64 {
        let w = &self.weights;
        w.row_of.get(&index).map_or(0.0, |r| w.rows[*r][kind.index()])
    }

    pub fn set_weight(&mut self, kind: Kind, index: u32, value: f64) {
        assert!((index as usize) < self.spec.dimension(), "index {index} out of range");
        let w = Arc::make_mut(&mut self.weights);
        let r = match w.row_of.get(&index) {
            Some(r) => *r,
            None => {
                let pos = w.features.partition_point(|f| *f < index);
                w.features.insert(pos, index);
                w.rows.insert(pos, [0.0; KIND_COUNT]);
                w.row_of = w.features.iter().enumerate().map(|(i, f)| (*f, i)).collect();
                pos
            }
        };
        w.rows[r][kind.index()] = value;
    }

    /// Number of feature indices with stored weights.
    pub fn active_features(&self) -> usize {
        self.weights.features.len()
    }

    pub fn set_threshold(&mut self, kind: Kind, t: f64) {
        self.thresholds.set(kind, t.clamp(MIN_THRESHOLD, MAX_THRESHOLD));
    }

    pub fn featurize(&self, note: &Note) -> FeatureVector {
        featurize_text(note.content(), note.persona, &self.spec, self.idf.as_ref())
    }

    pub fn logits(&self, x: &FeatureVector) -> [f64; KIND_COUNT] {
        let mut z = self.bias.0;
        for (idx, v) in &x.entries {
            if let Some(r) = self.weights.row_of.get(idx) {
                for (zk, w) in z.iter_mut().zip(&self.weights.rows[*r]) {
                    *zk += w * v;
                }
            }
        }
        z
    }

    pub fn proba_features(&self, x: &FeatureVector) -> KindScores {
        KindScores(self.logits(x).map(sigmoid))
    }

    pub fn predict_proba(&self, note: &Note) -> KindScores {
        self.proba_features(&self.featurize(note))
    }

    /// Kinds whose probability reaches their threshold. May be empty.
    pub fn predict_labels(&self, note: &Note) -> LabelSet {
        self.predict_proba(note).threshold(&self.thresholds)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            spec: self.spec.clone(),
            idf: self.idf.clone(),
            bias: self.bias,
            thresholds: self.thresholds,
            version: self.version,
        };
        let meta = serde_json::to_vec(&meta).expect("meta serializes");
        let mut out = Vec::with_capacity(16 + meta.len() + self.weights.rows.len() * (4 + 8 * KIND_COUNT));
        out.extend_from_slice(MAGIC);
        out.write_u16::<LittleEndian>(FORMAT_VERSION).unwrap();
        out.write_u32::<LittleEndian>(meta.len() as u32).unwrap();
        out.extend_from_slice(&meta);
        out.write_u32::<LittleEndian>(self.weights.rows.len() as u32).unwrap();
        for (idx, row) in self.weights.features.iter().zip(&self.weights.rows) {
            out.write_u32::<LittleEndian>(*idx).unwrap();
            for w in row {
                out.write_f64::<LittleEndian>(*w).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| FormatError::Truncated)?;
        if &magic != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let format = cur.read_u16::<LittleEndian>().map_err(|_| FormatError::Truncated)?;
        if format > FORMAT_VERSION || format == 0 {
            return Err(FormatError::UnsupportedVersion(format));
        }
        let meta_len = cur.read_u32::<LittleEndian>().map_err(|_| FormatError::Truncated)? as usize;
        let start = cur.position() as usize;
        let meta_bytes = bytes.get(start..start + meta_len).ok_or(FormatError::Truncated)?;
        let meta: Meta = serde_json::from_slice(meta_bytes).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        cur.set_position((start + meta_len) as u64);
        meta.spec.validate().map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let n = cur.read_u32::<LittleEndian>().map_err(|_| FormatError::Truncated)? as usize;
        let row_bytes = 4 + 8 * KIND_COUNT;
        if bytes.len() - cur.position() as usize != n * row_bytes {
            return Err(if bytes.len() - (cur.position() as usize) < n * row_bytes {
                FormatError::Truncated
            } else {
                FormatError::Corrupt("trailing bytes".into())
            });
        }
        let dim = meta.spec.dimension();
        let mut rows = Vec::with_capacity(n);
        let mut prev: Option<u32> = None;
        for _ in 0..n {
            let idx = cur.read_u32::<LittleEndian>().map_err(|_| FormatError::Truncated)?;
            if idx as usize >= dim || prev.is_some_and(|p| p >= idx) {
                return Err(FormatError::Corrupt(format!("bad row index {idx}")));
            }
            prev = Some(idx);
            let mut w = [0.0; KIND_COUNT];
            for x in w.iter_mut() {
                *x = cur.read_f64::<LittleEndian>().map_err(|_| FormatError::Truncated)?;
                if !x.is_finite() {
                    return Err(FormatError::Corrupt("non-finite weight".into()));
                }
            }
            rows.push((idx, w));
        }
        let all_finite = meta.bias.0.iter().all(|b| b.is_finite());
        let thresholds_ok = meta
            .thresholds
            .0
            .iter()
            .all(|t| (MIN_THRESHOLD - 1e-12..=MAX_THRESHOLD + 1e-12).contains(t));
        if !all_finite || !thresholds_ok {
            return Err(FormatError::Corrupt("bias or threshold out of range".into()));
        }
        let mut m = RouterModel::from_rows(meta.spec, rows);
        m.idf = meta.idf;
        m.bias = meta.bias;
        m.thresholds = meta.thresholds;
        m.version = meta.version;
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    spec: FeatureSpec,
    idf: Option<IdfTable>,
    bias: KindScores,
    thresholds: KindScores,
    version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("not a router model file")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("model file is truncated")]
    Truncated,
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
}

pub fn save_model(model: &RouterModel) -> Vec<u8> {
    model.to_bytes()
}

pub fn load_model(bytes: &[u8]) -> Result<RouterModel, FormatError> {
    RouterModel::from_bytes(bytes)
}
