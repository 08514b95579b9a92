//! Multi-label metrics.
//!
//! Conventions for empty denominators:
//! - per-kind precision, recall and F1 are 0 when their denominator is 0;
//! - macro-F1 averages only kinds with nonzero support or nonzero predictions,
//!   and is 1 when no kind qualifies (nothing gold, nothing predicted);
//! - micro-F1 is 1 when there are no gold and no predicted labels at all;
//! - per-sample F1 and Jaccard are 1 for an empty gold set predicted empty.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{Kind, LabelSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub sample_f1: f64,
    pub subset_accuracy: f64,
    pub jaccard_accuracy: f64,
    pub per_kind: BTreeMap<Kind, KindMetrics>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{gold} gold sets but {pred} predictions")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no samples")]
    Empty,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(gold: &[LabelSet], pred: &[LabelSet]) -> Result<MetricsReport, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = gold.len();
    let (mut tp, mut fp, mut fn_) = ([0usize; 20], [0usize; 20], [0usize; 20]);
    let (mut sample_f1, mut jaccard, mut exact) = (0.0, 0.0, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        let inter = g.intersection(*p).len();
        let union = g.union(*p).len();
        if union == 0 {
            sample_f1 += 1.0;
            jaccard += 1.0;
        } else {
            sample_f1 += 2.0 * inter as f64 / (g.len() + p.len()) as f64;
            jaccard += inter as f64 / union as f64;
        }
        if g == p {
            exact += 1;
        }
        for k in Kind::ALL {
            match (g.contains(k), p.contains(k)) {
                (true, true) => tp[k.index()] += 1,
                (false, true) => fp[k.index()] += 1,
                (true, false) => fn_[k.index()] += 1,
                (false, false) => {}
            }
        }
    }
    let mut per_kind = BTreeMap::new();
    let (mut macro_sum, mut macro_n) = (0.0, 0usize);
    for k in Kind::ALL {
        let i = k.index();
        let precision = ratio(tp[i], tp[i] + fp[i]);
        let recall = ratio(tp[i], tp[i] + fn_[i]);
        let f1 = ratio(2 * tp[i], 2 * tp[i] + fp[i] + fn_[i]);
        let support = tp[i] + fn_[i];
        let predicted = tp[i] + fp[i];
        if support + predicted > 0 {
            macro_sum += f1;
            macro_n += 1;
        }
        per_kind.insert(
            k,
            KindMetrics {
                precision,
                recall,
                f1,
                support,
                predicted,
            },
        );
    }
    let (t, p, f): (usize, usize, usize) = (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let micro_f1 = if t + p + f == 0 {
        1.0
    } else {
        ratio(2 * t, 2 * t + p + f)
    };
    Ok(MetricsReport {
        samples: n,
        micro_precision: ratio(t, t + p),
        micro_recall: ratio(t, t + f),
        micro_f1,
        macro_f1: if macro_n == 0 { 1.0 } else { macro_sum / macro_n as f64 },
        sample_f1: sample_f1 / n as f64,
        subset_accuracy: exact as f64 / n as f64,
        jaccard_accuracy: jaccard / n as f64,
        per_kind,
    })
}

impl MetricsReport {
    /// Per-kind rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "precision", "recall", "f1", "support", "predicted"])
            .expect("in-memory csv");
        for (k, m) in &self.per_kind {
            w.write_record([
                k.as_str().to_string(),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.f1),
                m.support.to_string(),
                m.predicted.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Kinds present in at least half of `train`; the single most frequent kind
/// if none is.
pub fn frequency_baseline(train: &[LabelSet]) -> LabelSet {
    let mut counts = [0usize; 20];
    for l in train {
        for k in l.iter() {
            counts[k.index()] += 1;
        }
    }
    let set: LabelSet = Kind::ALL
        .into_iter()
        .filter(|k| 2 * counts[k.index()] >= train.len() && counts[k.index()] > 0)
        .collect();
    if !set.is_empty() {
        return set;
    }
    let best = (0..20)
        .max_by_key(|i| (counts[*i], std::cmp::Reverse(*i)))
        .expect("nonempty");
    if counts[best] == 0 {
        LabelSet::EMPTY
    } else {
        LabelSet::from_iter([Kind::ALL[best]])
    }
}
