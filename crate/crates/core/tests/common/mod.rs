//! Shared builders and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use notebar_core::forge::ingest::{ConceptMapping, FieldMapping};
use notebar_core::taxonomy::{Kind, LabelSet, KIND_COUNT};
use notebar_core::Persona;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const REFERENCE_NOTES: usize = 3173;
pub const REFERENCE_CONCEPTS: usize = 8494;
pub const REFERENCE_PASSED: usize = 8349;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Mapping for the external schema used by the fixtures: text carried as a
/// bracketed note, concepts under `annotations`, QA outcome as a boolean.
pub fn external_mapping() -> FieldMapping {
    FieldMapping {
        id: "note_id".into(),
        persona: "mbti".into(),
        text: Some("raw_note".into()),
        concepts: "annotations".into(),
        concept: ConceptMapping {
            id: "concept_id".into(),
            kind: "type".into(),
            scores: "canonical_scores".into(),
            qa_status: "qa.passed".into(),
            ..ConceptMapping::default()
        },
        ..FieldMapping::default()
    }
}

const PLACES: [&str; 4] = ["Home", "Office", "Cafe", "Library"];
const DEVICES: [&str; 3] = ["iPhone 15", "Laptop", "iPad"];
const SKIES: [&str; 3] = ["Clear", "Rainy", "Cloudy"];

/// Records with the corpus-level totals of the released persona dataset:
/// 3,173 notes, 8,494 concepts of which 8,349 passed QA with per-kind counts
/// equal to [`Kind::REFERENCE_COUNTS`]. Note text and scores are synthetic.
pub fn reference_reconstruction(seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(Kind, bool)> = Kind::ALL
        .iter()
        .zip(Kind::REFERENCE_COUNTS)
        .flat_map(|(&k, n)| std::iter::repeat((k, true)).take(n as usize))
        .collect();
    let failed = REFERENCE_CONCEPTS - REFERENCE_PASSED;
    pool.extend((0..failed).map(|i| (Kind::ALL[i % 8], false)));
    pool.shuffle(&mut rng);

    let mut per_note: Vec<Vec<(Kind, bool)>> = vec![Vec::new(); REFERENCE_NOTES];
    for (i, c) in pool.into_iter().enumerate() {
        let slot = if i < REFERENCE_NOTES {
            i
        } else {
            rng.gen_range(0..REFERENCE_NOTES)
        };
        per_note[slot].push(c);
    }

    let start = NaiveDate::from_ymd_opt(2023, 8, 1).unwrap();
    per_note
        .into_iter()
        .enumerate()
        .map(|(i, concepts)| {
            let persona = Persona::ALL[(i * 7 + i / 97) % 16];
            let date = start + Duration::days((i / 60) as i64);
            let (h, m) = (7 + i % 14, (i * 13) % 60);
            let id = format!("rb-{i:05}");
            let text = format!(
                "[{}][{h:02}:{m:02}][{}][{}][{}] Entry {i}: {}",
                date.format("%Y-%m-%d"),
                PLACES[i % 4],
                DEVICES[i % 3],
                SKIES[i % 3],
                concepts.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>().join(", ")
            );
            let annotations: Vec<Value> = concepts
                .iter()
                .enumerate()
                .map(|(j, (kind, passed))| {
                    let s = rng.gen_range(0.0..1.0f64);
                    json!({
                        "concept_id": format!("{id}-{j}"),
                        "type": kind.as_str(),
                        "summary": format!("{} note {i}", kind.as_str()),
                        "entities": [],
                        "analysis": "",
                        "canonical_scores": {"telos": s, "logos": s, "ethos": s, "pathos": s, "kairos": s},
                        "qa": {"passed": passed},
                    })
                })
                .collect();
            json!({"note_id": id, "mbti": persona.as_str(), "raw_note": text, "annotations": annotations})
        })
        .collect()
}

pub fn to_jsonl(records: &[Value]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

/// Confusion counts for one kind, straight from the definition.
pub fn kind_counts(gold: &[LabelSet], pred: &[LabelSet], k: Kind) -> (f64, f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (g, p) in gold.iter().zip(pred) {
        match (g.contains(k), p.contains(k)) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

pub fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp + fp + fn_ == 0.0 {
        1.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

/// (micro F1, macro F1, sample F1, subset accuracy, Jaccard accuracy).
pub fn metrics_oracle(gold: &[LabelSet], pred: &[LabelSet]) -> (f64, f64, f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    let mut macro_sum = 0.0;
    let mut macro_n = 0.0;
    for &k in Kind::ALL.iter() {
        let (a, b, c) = kind_counts(gold, pred, k);
        tp += a;
        fp += b;
        fn_ += c;
        if a + b + c > 0.0 {
            macro_sum += f1(a, b, c);
            macro_n += 1.0;
        }
    }
    let n = gold.len() as f64;
    let mut sample = 0.0;
    let mut subset = 0.0;
    let mut jaccard = 0.0;
    for (g, p) in gold.iter().zip(pred) {
        let inter = Kind::ALL.iter().filter(|&&k| g.contains(k) && p.contains(k)).count() as f64;
        let union = Kind::ALL.iter().filter(|&&k| g.contains(k) || p.contains(k)).count() as f64;
        let (gl, pl) = (g.iter().count() as f64, p.iter().count() as f64);
        sample += if gl + pl == 0.0 { 1.0 } else { 2.0 * inter / (gl + pl) };
        jaccard += if union == 0.0 { 1.0 } else { inter / union };
        if Kind::ALL.iter().all(|&k| g.contains(k) == p.contains(k)) {
            subset += 1.0;
        }
    }
    let macro_f1 = if macro_n == 0.0 { 1.0 } else { macro_sum / macro_n };
    (f1(tp, fp, fn_), macro_f1, sample / n, subset / n, jaccard / n)
}

pub fn random_labels(rng: &mut impl Rng, density: f64) -> LabelSet {
    let mut s = LabelSet::new();
    for i in 0..KIND_COUNT {
        if rng.gen_bool(density) {
            s.insert(Kind::from_index(i).unwrap());
        }
    }
    s
}

/// Exact top-k by cosine over unit vectors: full scan, sort by score then id.
pub fn linear_topk(query: &[f64], rows: &[(String, Vec<f64>)], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = rows
        .iter()
        .map(|(id, v)| (id.clone(), v.iter().zip(query).map(|(a, b)| a * b).sum()))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}
