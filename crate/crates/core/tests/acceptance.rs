//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Set `NOTEBAR_RELEASED_DATASET` (and optionally `NOTEBAR_RELEASED_MAPPING`)
//! to check ingestion statistics against the released persona dataset; without
//! it the checked-in subsample and the reference reconstruction are used.

mod common;

use std::collections::HashMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveTime};
use common::*;
use notebar_core::concept::CanonicalScores;
use notebar_core::eval::plot::write_sensitivity_svgs;
use notebar_core::eval::{
    compute_metrics, evaluate_provider, run_native_sweep, run_split_eval, stratified_split, SplitSpec, SweepGrid,
};
use notebar_core::forge::client::ClientError;
use notebar_core::forge::corpus::labeled_notes;
use notebar_core::forge::generate::{generate_corpus, GenerationConfig};
use notebar_core::forge::ingest::{ingest_dataset, ingest_str, load_mapping, FieldMapping};
use notebar_core::forge::profile::default_profiles;
use notebar_core::forge::qa::{qa_corpus, qa_stage1, qa_stage2, Check, Outcome, QaConfig};
use notebar_core::forge::{corpus_stats, Corpus, CorpusStats, StubClient, TextClient};
use notebar_core::note::{parse_note, parse_note_bytes, Note, NoteHeader, NoteId, Persona};
use notebar_core::orchestrator::{Action, ArtifactRules, FeedbackEvent, FeedbackPolicy, Ledger, Orchestrator};
use notebar_core::router::calibrate::best_threshold;
use notebar_core::router::train::loss_and_grad;
use notebar_core::router::{ExternalProbabilities, FeatureSpec, HyperParams, RouterModel};
use notebar_core::vault::{Embedder, EmbeddingRecord, NoteRecord, Vault};
use notebar_core::{Concept, Kind, KindScores, LabelSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("parser", parser),
        ("ingestion-stats", ingestion_stats),
        ("qa-agent", qa_agent),
        ("metrics-oracle", metrics_oracle_check),
        ("gradient-check", gradient_check),
        ("router-quality", router_quality),
        ("calibration", calibration),
        ("retrieval", retrieval),
        ("feedback-loop", feedback_loop),
        ("external-backbone", external_backbone),
        ("sweep-harness", sweep_harness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name:<18} {secs:>7.2}s  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<18} {secs:>7.2}s  {detail}");
            }
        }
        std::io::stdout().flush().ok();
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

const REFERENCE_NOTE: &str =
    "[2023-08-14][19:45][Navy Pier, Chicago][iPhone 15][Clear skies, 32°C] I took a long walk by the lake…";

fn random_field(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'Z', '7', ' ', ',', '.', '-', '°', 'é', '[', ']', '\\', '東'];
    loop {
        let len = rng.gen_range(1..16);
        let s: String = (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect();
        let s = s.trim().to_string();
        if !s.is_empty() {
            return s;
        }
    }
}

fn random_note(rng: &mut ChaCha8Rng, i: usize) -> Note {
    let date =
        NaiveDate::from_ymd_opt(rng.gen_range(1990..2060), rng.gen_range(1..=12), rng.gen_range(1..=28)).unwrap();
    let time = NaiveTime::from_hms_opt(rng.gen_range(0..24), rng.gen_range(0..60), 0).unwrap();
    let header = NoteHeader::new(date, time, random_field(rng), random_field(rng), random_field(rng)).unwrap();
    let mut content = random_field(rng);
    if rng.gen_bool(0.3) {
        content.push('\n');
        content.push_str(&random_field(rng));
    }
    let persona = Persona::ALL[rng.gen_range(0..16)];
    Note::new(NoteId::new(format!("p{i}")), persona, header, content).unwrap()
}

fn parser() -> Verdict {
    let start = Instant::now();
    let n = parse_note(REFERENCE_NOTE, Persona::Infp).map_err(|e| e.to_string())?;
    let fields = (
        n.header.date_string(),
        n.header.time_string(),
        n.header.location.as_str(),
        n.header.device.as_str(),
        n.header.weather.as_str(),
        n.content(),
    );
    ensure!(
        fields
            == (
                "2023-08-14".to_string(),
                "19:45".to_string(),
                "Navy Pier, Chicago",
                "iPhone 15",
                "Clear skies, 32°C",
                "I took a long walk by the lake…"
            ),
        "reference note parsed as {fields:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let note = random_note(&mut rng, i);
        let text = note.render();
        let back = notebar_core::note::parse_note_with_id(&text, note.persona, note.id.clone())
            .map_err(|e| format!("round trip {i} failed on {text:?}: {e}"))?;
        ensure!(back == note, "round trip {i} changed {text:?}");
    }

    let seeds: Vec<Vec<u8>> = [
        "[2023-08-14][19:45][a][b][c] x",
        REFERENCE_NOTE,
        "[[]]\\[",
        "[2024-02-29][23:59][\\]][\\\\][x]",
    ]
    .iter()
    .map(|s| s.as_bytes().to_vec())
    .collect();
    let (mut ok, mut err) = (0usize, 0usize);
    for i in 0..100_000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect()
        } else {
            let mut b = seeds[i % seeds.len()].clone();
            for _ in 0..rng.gen_range(1..4) {
                let pos = rng.gen_range(0..=b.len());
                match rng.gen_range(0..3) {
                    0 if pos < b.len() => b[pos] = rng.gen(),
                    1 if pos < b.len() => {
                        b.remove(pos);
                    }
                    _ => b.insert(pos, *b"[]\\0 :-\n".get(rng.gen_range(0..8)).unwrap()),
                }
            }
            b
        };
        match catch_unwind(|| parse_note_bytes(&bytes, Persona::Entp)) {
            Ok(Ok(_)) => ok += 1,
            Ok(Err(_)) => err += 1,
            Err(_) => return Err(format!("parser panicked on {bytes:?}")),
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "reference note exact; 1000 round trips; 100000 fuzz inputs ({ok} notes, {err} errors); {elapsed:.1?}"
    ))
}

fn check_stats(
    stats: &CorpusStats,
    notes: usize,
    concepts: usize,
    passed: usize,
    per_kind: &[usize],
) -> Result<(), String> {
    ensure!(stats.note_count == notes, "note_count {} != {notes}", stats.note_count);
    ensure!(
        stats.concept_count == concepts,
        "concept_count {} != {concepts}",
        stats.concept_count
    );
    ensure!(
        stats.qa_passed_count == passed,
        "qa_passed {} != {passed}",
        stats.qa_passed_count
    );
    for (k, want) in Kind::ALL.iter().zip(per_kind) {
        ensure!(stats.per_kind[k] == *want, "{k} count {} != {want}", stats.per_kind[k]);
    }
    ensure!(
        stats.per_kind.values().sum::<usize>() == passed,
        "per-kind counts do not sum to qa_passed"
    );
    Ok(())
}

fn check_reference_totals(stats: &CorpusStats) -> Result<(), String> {
    let reference: Vec<usize> = Kind::REFERENCE_COUNTS.iter().map(|&c| c as usize).collect();
    check_stats(stats, REFERENCE_NOTES, REFERENCE_CONCEPTS, REFERENCE_PASSED, &reference)?;
    let mean = stats.mean_concepts_per_note.ok_or("mean absent")?;
    ensure!((mean - 2.68).abs() <= 0.02, "mean {mean}");
    ensure!(format!("{mean:.1}") == "2.7", "mean {mean} does not round to 2.7");
    Ok(())
}

fn ingestion_stats() -> Verdict {
    if let Ok(path) = std::env::var("NOTEBAR_RELEASED_DATASET") {
        let mapping = match std::env::var("NOTEBAR_RELEASED_MAPPING") {
            Ok(m) => load_mapping(m.as_ref()).map_err(|e| e.to_string())?,
            Err(_) => FieldMapping::default(),
        };
        let out = ingest_dataset(path.as_ref(), &mapping).map_err(|e| e.to_string())?;
        check_reference_totals(&corpus_stats(&out.corpus))?;
        return Ok(format!(
            "released dataset {path}: 3173 notes / 8494 concepts / 8349 passed, per-kind exact"
        ));
    }

    let mapping = load_mapping(&fixture("external_mapping.json")).map_err(|e| e.to_string())?;
    ensure!(
        mapping == external_mapping(),
        "fixture mapping differs from the builder mapping"
    );
    let expected: Value = serde_json::from_str(
        &std::fs::read_to_string(fixture("released_sample.expected.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let out = ingest_dataset(&fixture("released_sample.jsonl"), &mapping).map_err(|e| e.to_string())?;
    let lines: Vec<u64> = out.errors.iter().map(|e| e.line as u64).collect();
    let want_lines: Vec<u64> = expected["error_lines"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    ensure!(lines == want_lines, "rejected lines {lines:?}, expected {want_lines:?}");
    let stats = corpus_stats(&out.corpus);
    let per_kind: Vec<usize> = Kind::ALL
        .iter()
        .map(|k| expected["per_kind"][k.as_str()].as_u64().unwrap_or(0) as usize)
        .collect();
    let num = |k: &str| expected[k].as_u64().unwrap() as usize;
    check_stats(
        &stats,
        num("note_count"),
        num("concept_count"),
        num("qa_passed_count"),
        &per_kind,
    )
    .map_err(|e| format!("subsample: {e}"))?;
    let mean = stats.mean_concepts_per_note.unwrap();
    ensure!(
        (mean - expected["mean_concepts_per_note"].as_f64().unwrap()).abs() < 1e-12,
        "subsample mean {mean}"
    );

    let text = to_jsonl(&reference_reconstruction(2024));
    let out = ingest_str(&text, &mapping).map_err(|e| e.to_string())?;
    ensure!(
        out.errors.is_empty(),
        "reconstruction rejected {} records",
        out.errors.len()
    );
    check_reference_totals(&corpus_stats(&out.corpus)).map_err(|e| format!("reconstruction: {e}"))?;
    Ok(format!(
        "released file not configured; subsample {} notes exact ({} rejected lines named); \
         reference reconstruction 3173/8494/8349, mean {:.3}, per-kind exact",
        stats.note_count,
        lines.len(),
        REFERENCE_CONCEPTS as f64 / REFERENCE_NOTES as f64
    ))
}

struct FixedImplied(f64);

impl TextClient for FixedImplied {
    fn complete(&self, _: &str) -> Result<String, ClientError> {
        Err(ClientError::Transport("offline".into()))
    }
    fn score_consistency(&self, _: &str, _: &CanonicalScores) -> Result<f64, ClientError> {
        Ok(self.0)
    }
}

fn qa_record(i: usize) -> Value {
    json!({
        "id": format!("q{i}#c1"), "note_id": format!("q{i}"), "kind": "task",
        "summary": "Draft report", "entities": ["Maya"], "analysis": "steady",
        "scores": {"telos": 0.6, "logos": 0.6, "ethos": 0.6, "pathos": 0.6, "kairos": 0.6}
    })
}

fn qa_agent() -> Verdict {
    let mut cases: Vec<(String, Value, Check)> = Vec::new();
    for key in ["kind", "summary", "entities", "analysis", "scores"] {
        let mut r = qa_record(cases.len());
        r.as_object_mut().unwrap().remove(key);
        cases.push((format!("missing {key}"), r, Check::Schema));
    }
    for (key, bad) in [
        ("entities", json!("Maya")),
        ("scores", json!([0.6])),
        ("summary", json!(7)),
        ("analysis", json!(["x"])),
        ("kind", json!(3)),
    ] {
        let mut r = qa_record(cases.len());
        r[key] = bad.clone();
        cases.push((format!("{key} = {bad}"), r, Check::Type));
    }
    for dim in CanonicalScores::NAMES {
        let mut r = qa_record(cases.len());
        r["scores"][dim] = json!("0.5");
        cases.push((format!("{dim} as string"), r, Check::Type));
    }
    let mut detected = 0;
    let total_structural = cases.len();
    for (label, rec, check) in &cases {
        let (cs, rep) = qa_stage1(std::slice::from_ref(rec));
        let hit = rep
            .entries
            .iter()
            .any(|e| e.check == *check && e.outcome == Outcome::Failed);
        ensure!(hit, "{label} not detected by {check:?}");
        ensure!(
            cs[0].qa_status == notebar_core::QaStatus::Failed,
            "{label} not marked failed"
        );
        detected += 1;
    }

    let mut range_cases = 0;
    for dim in CanonicalScores::NAMES {
        for bad in [-0.1, 1.2] {
            let mut r = qa_record(0);
            r["scores"][dim] = json!(bad);
            let (cs, rep) = qa_stage1(&[r]);
            ensure!(
                rep.entries
                    .iter()
                    .any(|e| e.check == Check::Range && e.outcome == Outcome::Corrected),
                "{dim}={bad} not corrected"
            );
            ensure!(cs[0].scores.in_unit_range(), "{dim}={bad} left out of range");
            let (again, rep2) = qa_stage1(&[Value::Object(cs[0].to_record())]);
            ensure!(
                again == cs && rep2.all_pass(),
                "stage one not idempotent after {dim}={bad}"
            );
            range_cases += 1;
            detected += 1;
        }
    }

    let (passed, _) = qa_stage1(&[qa_record(0)]);
    let note = notebar_core::note::parse_note_with_id(
        "[2023-08-14][17:00][Office][Laptop][Clear] Draft report for Maya",
        Persona::Intj,
        NoteId::new("q0"),
    )
    .unwrap();
    let notes = HashMap::from([(note.id.clone(), note)]);
    let no_fix = QaConfig {
        autofix_attempts: 0,
        ..QaConfig::default()
    };
    for (implied, should_flag) in [(0.9, true), (0.85, true), (0.35, true), (0.849, false), (0.6, false)] {
        let (out, rep) = qa_stage2(&passed, &notes, &FixedImplied(implied), &no_fix);
        let flagged = rep
            .entries
            .iter()
            .any(|e| e.check == Check::CanonicalConsistency && e.outcome == Outcome::Flagged);
        ensure!(
            flagged == should_flag,
            "implied {implied} vs mean 0.6: flagged={flagged}, expected {should_flag}"
        );
        ensure!(
            (out[0].qa_status == notebar_core::QaStatus::Flagged) == should_flag,
            "status for implied {implied}"
        );
        if should_flag {
            detected += 1;
        }
    }

    let cfg = GenerationConfig {
        seed: 5,
        notes_per_persona: (10, 20),
        inconsistency_rate: 0.1,
        ..GenerationConfig::default()
    };
    let mut corpus = generate_corpus(&default_profiles(5), &cfg, None).map_err(|e| e.to_string())?;
    qa_corpus(&mut corpus, Some(&StubClient::new(5)), &QaConfig::default());
    let all: Vec<Concept> = corpus.iter().flat_map(|e| e.concepts.clone()).collect();
    ensure!(
        all.iter().all(|c| c.scores.in_unit_range()),
        "generated corpus has unclamped scores"
    );
    let records: Vec<Value> = all.iter().map(|c| Value::Object(c.to_record())).collect();
    let (once, _) = qa_stage1(&records);
    let (twice, rep) = qa_stage1(&once.iter().map(|c| Value::Object(c.to_record())).collect::<Vec<_>>());
    let valid_once: Vec<&Concept> = once
        .iter()
        .filter(|c| c.qa_status != notebar_core::QaStatus::Failed)
        .collect();
    ensure!(
        twice
            .iter()
            .filter(|c| c.qa_status != notebar_core::QaStatus::Failed)
            .count()
            == valid_once.len(),
        "stage one changed validity on second pass"
    );
    ensure!(
        rep.all_pass(),
        "second stage-one pass over {} concepts is not all-pass",
        twice.len()
    );

    let expected = total_structural + range_cases + 3;
    ensure!(detected == expected, "detected {detected}/{expected}");
    Ok(format!(
        "{detected}/{expected} corruptions detected (schema, type, range, discrepancy 0.30, boundary 0.25); \
         scores clamped; stage one idempotent on {} concepts",
        twice.len()
    ))
}

fn metrics_oracle_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = rng.gen_range(1..60);
        let density = rng.gen_range(0.02..0.4);
        let gold: Vec<LabelSet> = (0..n).map(|_| random_labels(&mut rng, density)).collect();
        let pred: Vec<LabelSet> = gold
            .iter()
            .map(|g| {
                if rng.gen_bool(0.3) {
                    *g
                } else {
                    random_labels(&mut rng, density)
                }
            })
            .collect();
        let m = compute_metrics(&gold, &pred).map_err(|e| e.to_string())?;
        let (micro, macro_, sample, subset, jac) = metrics_oracle(&gold, &pred);
        for (name, got, want) in [
            ("micro", m.micro_f1, micro),
            ("macro", m.macro_f1, macro_),
            ("sample", m.sample_f1, sample),
            ("subset", m.subset_accuracy, subset),
            ("jaccard", m.jaccard_accuracy, jac),
        ] {
            let d = (got - want).abs();
            worst = worst.max(d);
            ensure!(d < 1e-9, "case {case}: {name} {got} vs oracle {want}");
        }
    }
    Ok(format!("200 random cases, max |delta| = {worst:e}"))
}

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let w: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let y = rng.gen_bool(0.5);
        let pw = rng.gen_range(1.0..20.0);
        let (_, gw, gb) = loss_and_grad(&w, b, &x, y, pw);
        let loss = |w: &[f64], b: f64| loss_and_grad(w, b, &x, y, pw).0;
        let mut check = |analytic: f64, numeric: f64, what: String| -> Result<(), String> {
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-7);
            worst = worst.max(rel);
            ensure!(rel < 1e-4, "case {case} {what}: analytic {analytic} numeric {numeric}");
            Ok(())
        };
        for j in 0..30 {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[j] += h;
            dn[j] -= h;
            check(gw[j], (loss(&up, b) - loss(&dn, b)) / (2.0 * h), format!("w[{j}]"))?;
        }
        check(gb, (loss(&w, b + h) - loss(&w, b - h)) / (2.0 * h), "bias".into())?;
    }
    Ok(format!("50 instances x 31 partials, max relative error {worst:.2e}"))
}

fn quality_corpus() -> Result<Corpus, String> {
    let cfg = GenerationConfig {
        seed: 7,
        ..GenerationConfig::default()
    };
    let mut corpus = generate_corpus(&default_profiles(7), &cfg, None).map_err(|e| e.to_string())?;
    qa_corpus(&mut corpus, Some(&StubClient::new(7)), &QaConfig::default());
    Ok(corpus)
}

fn router_quality() -> Verdict {
    let start = Instant::now();
    let corpus = quality_corpus()?;
    let stats = corpus_stats(&corpus);
    ensure!(stats.note_count >= 2000, "only {} notes", stats.note_count);
    ensure!(stats.per_persona.len() == 16, "{} personas", stats.per_persona.len());
    let data = labeled_notes(&corpus);
    let out = run_split_eval(
        &data,
        &SplitSpec::default(),
        &HyperParams::default(),
        &FeatureSpec::default(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (micro, base) = (out.test.micro_f1, out.baseline_test.micro_f1);
    let detail = format!(
        "{} notes, split {:?}, test micro-F1 {micro:.3} (baseline {base:.3}, margin {:.3}), macro-F1 {:.3}, {elapsed:.1?}",
        stats.note_count,
        out.sizes,
        micro - base,
        out.test.macro_f1
    );
    ensure!(micro >= 0.60, "{detail}");
    ensure!(micro >= base + 0.15, "{detail}");
    ensure!(elapsed < Duration::from_secs(300), "{detail}");
    Ok(detail)
}

fn f1_at(scores: &[(f64, bool)], t: f64) -> f64 {
    let tp = scores.iter().filter(|(s, y)| *y && *s >= t).count() as f64;
    let fp = scores.iter().filter(|(s, y)| !*y && *s >= t).count() as f64;
    let fn_ = scores.iter().filter(|(s, y)| *y && *s < t).count() as f64;
    f1(tp, fp, fn_)
}

fn calibration() -> Verdict {
    let example = [(0.9, true), (0.7, false), (0.6, true), (0.2, false)];
    let candidates = [0.05, 0.4, 0.65, 0.8, 0.95];
    let mut oracle = (0.0, f64::NEG_INFINITY);
    for t in candidates {
        let f = f1_at(&example, t);
        if f >= oracle.1 {
            oracle = (t, f);
        }
    }
    let (t, f) = best_threshold(&example);
    ensure!((t, f) == oracle, "best_threshold {t},{f} vs oracle {oracle:?}");
    ensure!(
        (t - 0.4).abs() < 1e-12 && (f - 0.8).abs() < 1e-12,
        "worked example gave {t},{f}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for case in 0..100 {
        let n = rng.gen_range(5..80);
        let gold: Vec<LabelSet> = (0..n).map(|_| random_labels(&mut rng, 0.15)).collect();
        let scores: Vec<KindScores> = gold
            .iter()
            .map(|g| {
                let mut s = KindScores::splat(0.0);
                for k in Kind::ALL {
                    let base = if g.contains(k) { 0.55 } else { 0.35 };
                    s.set(k, (base + rng.gen_range(-0.35..0.35f64)).clamp(0.0, 1.0));
                }
                s
            })
            .collect();
        let half = KindScores::splat(0.5);
        let (thr, _) = notebar_core::router::calibrate_scores(&scores, &gold, &half).map_err(|e| e.to_string())?;
        let before = compute_metrics(&gold, &scores.iter().map(|s| s.threshold(&half)).collect::<Vec<_>>()).unwrap();
        let after = compute_metrics(&gold, &scores.iter().map(|s| s.threshold(&thr)).collect::<Vec<_>>()).unwrap();
        ensure!(
            after.micro_f1 >= before.micro_f1,
            "case {case}: micro-F1 {} -> {}",
            before.micro_f1,
            after.micro_f1
        );
    }
    Ok(
        "worked example threshold 0.4 / F1 0.8 matches sweep oracle; 100 random validation sets never lose micro-F1"
            .into(),
    )
}

fn retrieval() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(256);
    let header = NoteHeader::new(
        NaiveDate::from_ymd_opt(2023, 8, 14).unwrap(),
        NaiveTime::MIN,
        "a",
        "b",
        "c",
    )
    .unwrap();
    let mut checked = 0;
    for case in 0..100 {
        let n = rng.gen_range(1..=1000);
        let vault = Vault::new(Embedder::new(FeatureSpec::default(), None, 256, case));
        let records: Vec<NoteRecord> = (0..n)
            .map(|i| {
                let note = Note::new(NoteId::new(format!("v{i:04}")), Persona::Istj, header.clone(), "x").unwrap();
                NoteRecord::new(note, Vec::new(), None)
            })
            .collect();
        vault.put_notes(records).map_err(|e| e.to_string())?;
        let vectors: Vec<(String, Vec<f64>)> = (0..n)
            .map(|i| (format!("v{i:04}"), (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        vault
            .import_embeddings(
                vectors
                    .iter()
                    .map(|(id, v)| EmbeddingRecord {
                        note_id: NoteId::new(id.clone()),
                        vector: v.clone(),
                        zero: false,
                    })
                    .collect(),
            )
            .map_err(|e| e.to_string())?;
        let unit: Vec<(String, Vec<f64>)> = vectors
            .iter()
            .map(|(id, v)| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (id.clone(), v.iter().map(|x| x / norm).collect())
            })
            .collect();
        let k = rng.gen_range(1..=20);
        let query: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
        let qunit: Vec<f64> = query.iter().map(|x| x / qn).collect();
        let got = vault.search_topk(&query, k).map_err(|e| e.to_string())?;
        let want = linear_topk(&qunit, &unit, k);
        ensure!(
            got.len() == want.len(),
            "case {case}: {} results, oracle {}",
            got.len(),
            want.len()
        );
        for ((gid, gs), (wid, ws)) in got.iter().zip(&want) {
            ensure!(
                gid.as_str() == wid && (gs - ws).abs() < 1e-9,
                "case {case}: {gid}:{gs} vs {wid}:{ws}"
            );
        }
        let pick = rng.gen_range(0..n);
        let top = vault.search_topk(&vectors[pick].1, 1).map_err(|e| e.to_string())?;
        ensure!(
            top[0].0.as_str() == unit[pick].0,
            "case {case}: self query returned {}",
            top[0].0
        );
        ensure!((top[0].1 - 1.0).abs() <= 1e-6, "case {case}: self score {}", top[0].1);
        checked += 1;
    }
    Ok(format!(
        "{checked} random indexes (d=256, n<=1000) match linear scan; self top-1 = 1 within 1e-6"
    ))
}

fn task_model() -> RouterModel {
    let mut m = RouterModel::zeros(FeatureSpec::default());
    m.bias = KindScores::splat(-10.0);
    m.bias.set(Kind::Task, 10.0);
    m.bias.set(Kind::Insight, 10.0);
    m
}

fn seeded_vault(model: &RouterModel, n: usize) -> (Vault, Vec<Note>) {
    let vault = Vault::new(Embedder::from_model(model));
    let notes: Vec<Note> = (0..n)
        .map(|i| {
            let text = format!(
                "[2023-08-{:02}][09:00][Office][Laptop][Clear] Draft section {i} of the report by 5:00 PM",
                1 + i % 28
            );
            notebar_core::note::parse_note_with_id(&text, Persona::Intj, NoteId::new(format!("f{i:03}"))).unwrap()
        })
        .collect();
    vault
        .put_notes(
            notes
                .iter()
                .map(|n| NoteRecord::new(n.clone(), Vec::new(), None))
                .collect(),
        )
        .unwrap();
    (vault, notes)
}

fn feedback_loop() -> Verdict {
    let policy = FeedbackPolicy::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ledger_path = dir.path().join("feedback.jsonl");
    let model = task_model();
    let (vault, notes) = seeded_vault(&model, 40);
    let snapshot = vault.snapshot();
    let open = || {
        let ledger = Ledger::open(&ledger_path).map_err(|e| e.to_string())?;
        Orchestrator::new(model.clone(), ledger, policy, ArtifactRules::default(), 3).map_err(|e| e.to_string())
    };

    let orch = open()?;
    let mut task_ids = Vec::new();
    for n in &notes[..10] {
        for s in orch.suggest_for(n, &snapshot).map_err(|e| e.to_string())? {
            if s.kind_trigger == Kind::Task && s.payload.variant() == "kanban_task" {
                task_ids.push(s.id);
            }
        }
    }
    ensure!(
        task_ids.len() == 10,
        "expected 10 task suggestions, got {}",
        task_ids.len()
    );
    let before = orch.model().thresholds.get(Kind::Task);
    for id in &task_ids {
        orch.record_feedback(FeedbackEvent::new(id.clone(), Action::Dismiss, None))
            .map_err(|e| e.to_string())?;
    }
    let after = orch.model().thresholds.get(Kind::Task);
    ensure!(
        before == 0.5 && after == 0.6,
        "10 dismissals moved {before} to {after}, expected exactly 0.6"
    );

    let mut clamp = 0.9;
    for _ in 0..10 {
        clamp = policy.apply(clamp, Action::Dismiss);
    }
    ensure!(
        clamp == policy.upper,
        "10 dismissals from 0.9 gave {clamp}, expected clamp at {}",
        policy.upper
    );

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut pending: Vec<String> = Vec::new();
    for n in &notes[10..] {
        pending.extend(
            orch.suggest_for(n, &snapshot)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|s| s.id),
        );
    }
    let mut steps = 0;
    for id in pending {
        let s = orch.suggestion(&id).unwrap();
        let t0 = orch.model().thresholds.get(s.kind_trigger);
        let action = [Action::Accept, Action::Dismiss][rng.gen_range(0..2)];
        let out = orch
            .record_feedback(FeedbackEvent::new(id.clone(), action, None))
            .map_err(|e| e.to_string())?;
        let t1 = orch.model().thresholds.get(s.kind_trigger);
        ensure!(
            out.threshold_before == t0 && out.threshold_after == t1,
            "outcome disagrees with model for {id}"
        );
        match action {
            Action::Dismiss => ensure!(t1 >= t0, "dismiss lowered {t0} to {t1}"),
            _ => ensure!(t1 <= t0, "accept raised {t0} to {t1}"),
        }
        ensure!(
            (policy.lower..=policy.upper).contains(&t1),
            "threshold {t1} escaped bounds"
        );
        ensure!(
            orch.record_feedback(FeedbackEvent::new(id, Action::Accept, None))
                .is_err(),
            "second feedback accepted"
        );
        steps += 1;
    }
    let live = orch.model();
    drop(orch);

    let reopened = open()?;
    let replayed = reopened.model();
    let same = Kind::ALL
        .iter()
        .all(|k| replayed.thresholds.get(*k).to_bits() == live.thresholds.get(*k).to_bits());
    ensure!(same, "replayed thresholds differ from live thresholds");
    ensure!(
        replayed.version == live.version,
        "version {} vs {}",
        replayed.version,
        live.version
    );
    Ok(format!(
        "10 dismissals 0.5 -> 0.6 exactly; clamp at 0.95; {steps} random actions monotone; replay bit-exact at version {}",
        live.version
    ))
}

fn external_backbone() -> Verdict {
    let cfg = GenerationConfig {
        seed: 9,
        notes_per_persona: (20, 30),
        ..GenerationConfig::default()
    };
    let mut corpus = generate_corpus(&default_profiles(9), &cfg, None).map_err(|e| e.to_string())?;
    qa_corpus(&mut corpus, None, &QaConfig::default());
    let data = labeled_notes(&corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut file = String::new();
    let mut probs: HashMap<String, Vec<f64>> = HashMap::new();
    for (note, gold) in &data {
        let p: Vec<f64> = Kind::ALL
            .iter()
            .map(|k| {
                let centre = if gold.contains(*k) { 0.7 } else { 0.25 };
                (centre + rng.gen_range(-0.3..0.3f64)).clamp(0.0, 1.0)
            })
            .collect();
        file.push_str(&json!({"note_id": note.id.as_str(), "probabilities": p}).to_string());
        file.push('\n');
        probs.insert(note.id.as_str().to_string(), p);
    }
    let external = ExternalProbabilities::read(file.as_bytes()).map_err(|e| e.to_string())?;
    let mut model = RouterModel::zeros(FeatureSpec::default());
    for (i, k) in Kind::ALL.iter().enumerate() {
        model.set_threshold(*k, 0.3 + 0.02 * i as f64);
    }
    let labels: Vec<LabelSet> = data.iter().map(|(_, l)| *l).collect();
    let split = stratified_split(&labels, &SplitSpec::default()).map_err(|e| e.to_string())?;
    let test: Vec<(Note, LabelSet)> = split.test.iter().map(|i| data[*i].clone()).collect();
    let report = evaluate_provider(&external, &model, &test).map_err(|e| e.to_string())?;

    let gold: Vec<LabelSet> = test.iter().map(|(_, l)| *l).collect();
    let pred: Vec<LabelSet> = test
        .iter()
        .map(|(n, _)| {
            let p = &probs[n.id.as_str()];
            let mut s = LabelSet::new();
            for (i, k) in Kind::ALL.iter().enumerate() {
                if p[i] >= 0.3 + 0.02 * i as f64 {
                    s.insert(*k);
                }
            }
            s
        })
        .collect();
    let (micro, macro_, sample, subset, jac) = metrics_oracle(&gold, &pred);
    ensure!(
        (
            report.micro_f1,
            report.macro_f1,
            report.sample_f1,
            report.subset_accuracy,
            report.jaccard_accuracy
        ) == (micro, macro_, sample, subset, jac),
        "provider metrics {:?} differ from oracle {:?}",
        (report.micro_f1, report.macro_f1, report.sample_f1),
        (micro, macro_, sample)
    );
    Ok(format!(
        "{} test notes from a probability file: micro-F1 {micro:.4}, macro-F1 {macro_:.4} equal the oracle exactly",
        test.len()
    ))
}

fn sweep_harness() -> Verdict {
    let cfg = GenerationConfig {
        seed: 21,
        notes_per_persona: (30, 40),
        ..GenerationConfig::default()
    };
    let mut corpus = generate_corpus(&default_profiles(21), &cfg, None).map_err(|e| e.to_string())?;
    qa_corpus(&mut corpus, Some(&StubClient::new(21)), &QaConfig::default());
    let data = labeled_notes(&corpus);
    let labels: Vec<LabelSet> = data.iter().map(|(_, l)| *l).collect();
    let split = stratified_split(&labels, &SplitSpec::default()).map_err(|e| e.to_string())?;
    let train: Vec<_> = split
        .train
        .iter()
        .map(|i| data[*i].clone())
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let val: Vec<_> = split.val.iter().map(|i| data[*i].clone()).collect();
    let grid = SweepGrid::native();
    let expected_points = grid.batch_sizes.len() * grid.learning_rates.len() * grid.epoch_counts.len();
    let result = run_native_sweep(&train, &val, &grid, &HyperParams::default(), &FeatureSpec::default())
        .map_err(|e| e.to_string())?;
    ensure!(
        result.points.len() == expected_points,
        "{} points, grid has {expected_points}",
        result.points.len()
    );
    ensure!(
        result.points.iter().all(|p| p.metrics.is_some()),
        "some configurations failed"
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv_path = dir.path().join("sweep.csv");
    std::fs::write(&csv_path, result.to_csv()).map_err(|e| e.to_string())?;
    let svgs = write_sensitivity_svgs(&result, dir.path()).map_err(|e| e.to_string())?;
    let names: Vec<String> = svgs
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in ["batch_size", "learning_rate", "epochs"] {
        ensure!(
            names.iter().any(|n| n.contains(want) && n.ends_with(".svg")),
            "no {want} panel in {names:?}"
        );
    }
    for p in &svgs {
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        ensure!(text.contains("<svg"), "{} is not an SVG", p.display());
    }

    let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| e.to_string())?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = headers
        .iter()
        .position(|h| h == "micro_f1")
        .ok_or("csv has no micro_f1 column")?;
    let rows: Vec<f64> = reader
        .records()
        .map(|r| {
            r.map_err(|e| e.to_string())
                .and_then(|r| r[col].parse::<f64>().map_err(|e| e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    ensure!(rows.len() == expected_points, "csv has {} rows", rows.len());

    let mut argmax = 0;
    for (i, p) in result.points.iter().enumerate() {
        if p.metrics.as_ref().unwrap().micro_f1 > result.points[argmax].metrics.as_ref().unwrap().micro_f1 {
            argmax = i;
        }
    }
    ensure!(
        result.best == argmax,
        "best index {} but argmax is {argmax}",
        result.best
    );
    let csv_max = rows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ensure!(
        rows[result.best] == csv_max,
        "best csv row {} below csv max {csv_max}",
        rows[result.best]
    );
    let best = &result.best_point().hp;
    Ok(format!(
        "{expected_points} configurations, csv + {} svgs; best batch {} lr {} epochs {} (val micro-F1 {csv_max:.4})",
        svgs.len(),
        best.batch_size,
        best.learning_rate,
        best.epochs
    ))
}
