//! Per-kind threshold calibration on a validation set.
//!
//! Candidates for a kind are the midpoints between consecutive distinct
//! validation scores plus the bounds 0.05 and 0.95, restricted to
//! `[0.05, 0.95]`. The candidate with the best F1 for that kind wins, ties
//! going to the higher threshold. Kinds are visited in taxonomy order and a
//! new threshold is kept only if pooled micro-F1 over all kinds does not drop,
//! so calibration never lowers validation micro-F1.

use serde::{Deserialize, Serialize};

use crate::note::Note;
use crate::router::model::{RouterModel, MAX_THRESHOLD, MIN_THRESHOLD};
use crate::taxonomy::{Kind, KindScores, LabelSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn f1(self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

fn counts_at(scores: &[(f64, bool)], t: f64) -> Counts {
    let mut c = Counts::default();
    for &(s, y) in scores {
        match (s >= t, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

fn micro(per_kind: &[Counts]) -> f64 {
    let total = per_kind.iter().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    if total.tp + total.fp + total.fn_ == 0 {
        1.0
    } else {
        total.f1()
    }
}

pub fn candidates(scores: &[(f64, bool)]) -> Vec<f64> {
    let mut uniq: Vec<f64> = scores.iter().map(|s| s.0).collect();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let mut c: Vec<f64> = uniq.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    c.push(MIN_THRESHOLD);
    c.push(MAX_THRESHOLD);
    c.retain(|t| (MIN_THRESHOLD..=MAX_THRESHOLD).contains(t));
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Best `(threshold, f1)` for one kind.
pub fn best_threshold(scores: &[(f64, bool)]) -> (f64, f64) {
    let mut best = (MIN_THRESHOLD, f64::NEG_INFINITY);
    for t in candidates(scores) {
        let f = counts_at(scores, t).f1();
        if f >= best.1 {
            best = (t, f);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCalibration {
    pub kind: Kind,
    pub old_threshold: f64,
    pub new_threshold: f64,
    pub f1: f64,
    pub note: CalibrationNote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationNote {
    Updated,
    Unchanged,
    /// No validation positives for this kind.
    NoPositives,
    /// The kind's best threshold would have lowered micro-F1.
    RejectedByMicroGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub kinds: Vec<KindCalibration>,
    pub micro_f1_before: f64,
    pub micro_f1_after: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CalibrationError {
    #[error("validation set is empty")]
    Empty,
    #[error("{scores} score rows for {golds} gold sets")]
    LengthMismatch { scores: usize, golds: usize },
}

/// Calibrate thresholds from a score matrix, e.g. an external backbone's.
pub fn calibrate_scores(
    scores: &[KindScores],
    gold: &[LabelSet],
    thresholds: &KindScores,
) -> Result<(KindScores, CalibrationReport), CalibrationError> {
    if scores.len() != gold.len() {
        return Err(CalibrationError::LengthMismatch {
            scores: scores.len(),
            golds: gold.len(),
        });
    }
    if scores.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let columns: Vec<Vec<(f64, bool)>> = Kind::ALL
        .iter()
        .map(|k| {
            scores
                .iter()
                .zip(gold)
                .map(|(s, g)| (s.get(*k), g.contains(*k)))
                .collect()
        })
        .collect();
    let mut current = *thresholds;
    let mut counts: Vec<Counts> = Kind::ALL
        .iter()
        .map(|k| counts_at(&columns[k.index()], current.get(*k)))
        .collect();
    let before = micro(&counts);
    let mut kinds = Vec::with_capacity(Kind::ALL.len());
    for k in Kind::ALL {
        let col = &columns[k.index()];
        let old = current.get(k);
        let entry = |new_threshold, f1, note| KindCalibration {
            kind: k,
            old_threshold: old,
            new_threshold,
            f1,
            note,
        };
        if !col.iter().any(|(_, y)| *y) {
            kinds.push(entry(old, counts[k.index()].f1(), CalibrationNote::NoPositives));
            continue;
        }
        let (t, f1) = best_threshold(col);
        let trial = counts_at(col, t);
        let saved = counts[k.index()];
        let micro_now = micro(&counts);
        counts[k.index()] = trial;
        if micro(&counts) + 1e-12 < micro_now {
            counts[k.index()] = saved;
            kinds.push(entry(old, saved.f1(), CalibrationNote::RejectedByMicroGuard));
            continue;
        }
        current.set(k, t);
        let note = if t == old {
            CalibrationNote::Unchanged
        } else {
            CalibrationNote::Updated
        };
        kinds.push(entry(t, f1, note));
    }
    let after = micro(&counts);
    Ok((
        current,
        CalibrationReport {
            kinds,
            micro_f1_before: before,
            micro_f1_after: after,
        },
    ))
}

/// Returns a recalibrated copy with the version incremented; `model` is untouched.
pub fn calibrate_thresholds(
    model: &RouterModel,
    val: &[(Note, LabelSet)],
) -> Result<(RouterModel, CalibrationReport), CalibrationError> {
    let scores: Vec<KindScores> = val.iter().map(|(n, _)| model.predict_proba(n)).collect();
    let gold: Vec<LabelSet> = val.iter().map(|(_, g)| *g).collect();
    let (thresholds, report) = calibrate_scores(&scores, &gold, &model.thresholds)?;
    let mut out = model.clone();
    out.thresholds = thresholds;
    out.version = model.version + 1;
    Ok((out, report))
}
