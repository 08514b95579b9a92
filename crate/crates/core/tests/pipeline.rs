//! End to end: synthetic corpus through QA, training, the vault and the
//! feedback loop.

use notebar_core::eval::{run_split_eval, SplitSpec};
use notebar_core::forge::corpus::labeled_notes;
use notebar_core::forge::generate::{generate_corpus, GenerationConfig};
use notebar_core::forge::profile::default_profiles;
use notebar_core::forge::qa::{qa_corpus, QaConfig};
use notebar_core::note::parse_note_with_id;
use notebar_core::orchestrator::{Action, FeedbackEvent, Lane, Orchestrator, Payload};
use notebar_core::router::{FeatureSpec, HyperParams, RouterModel};
use notebar_core::vault::{Embedder, NoteFilter, NoteRecord, PredictedLabels, Vault};
use notebar_core::{Kind, KindScores, NoteId, Persona, QaStatus};

#[test]
fn corpus_to_board() {
    let cfg = GenerationConfig {
        seed: 21,
        personas: vec![Persona::Entj, Persona::Infp, Persona::Istj, Persona::Esfp],
        notes_per_persona: (60, 80),
        ..GenerationConfig::default()
    };
    let mut corpus = generate_corpus(&default_profiles(21), &cfg, None).unwrap();
    assert!(corpus
        .iter()
        .flat_map(|e| &e.concepts)
        .all(|c| c.qa_status == QaStatus::Pending));
    qa_corpus(&mut corpus, None, &QaConfig::default());
    assert!(corpus
        .iter()
        .flat_map(|e| &e.concepts)
        .all(|c| c.qa_status != QaStatus::Pending));

    let data = labeled_notes(&corpus);
    let outcome = run_split_eval(
        &data,
        &SplitSpec::default(),
        &HyperParams::default(),
        &FeatureSpec::default(),
    )
    .unwrap();
    assert!(
        outcome.test.micro_f1 > outcome.baseline_test.micro_f1,
        "{} vs baseline {}",
        outcome.test.micro_f1,
        outcome.baseline_test.micro_f1
    );

    let model = outcome.model;
    let vault = Vault::new(Embedder::from_model(&model));
    vault.register_model_version(model.version);
    let records = corpus
        .iter()
        .map(|e| {
            let predicted = PredictedLabels {
                labels: model.predict_labels(&e.note),
                model_version: model.version,
            };
            NoteRecord::new(e.note.clone(), e.concepts.clone(), Some(predicted))
        })
        .collect();
    vault.put_notes(records).unwrap();
    let snapshot = vault.snapshot();
    assert_eq!(snapshot.list(&NoteFilter::default()).len(), corpus.len());

    let orch = Orchestrator::in_memory(model.clone());
    let task_note = corpus
        .iter()
        .map(|e| &e.note)
        .find(|n| model.predict_labels(n).contains(Kind::Task))
        .expect("some note is routed to task");
    let suggestions = orch.suggest_for(task_note, &snapshot).unwrap();
    let card = suggestions
        .iter()
        .find(|s| matches!(s.payload, Payload::KanbanTask(_)))
        .expect("task yields a kanban card");
    assert!(card.context.iter().all(|id| *id != task_note.id));
    assert!(orch.kanban_board().todo.is_empty());

    orch.record_feedback(FeedbackEvent::new(card.id.clone(), Action::Accept, None))
        .unwrap();
    let board = orch.kanban_board();
    assert_eq!(board.lane(Lane::Todo).len(), 1);
    assert_eq!(board.todo[0].suggestion_id, card.id);
    let expected = orch.policy().apply(model.thresholds.get(Kind::Task), Action::Accept);
    assert_eq!(orch.model().thresholds.get(Kind::Task), expected);
    assert!(expected <= model.thresholds.get(Kind::Task));
}

#[test]
fn ten_idea_dismissals_drop_a_borderline_note() {
    let mut model = RouterModel::zeros(FeatureSpec::default());
    model.bias = KindScores::splat(-8.0);
    let p: f64 = 0.55;
    model.bias.set(Kind::Idea, (p / (1.0 - p)).ln());
    model.thresholds = KindScores::splat(0.5);

    let notes: Vec<_> = (0..12)
        .map(|i| {
            let text = format!(
                "[2024-05-{:02}][08:30][Cafe][Phone][Fog] What if the garden had a rain sensor, version {i}",
                1 + i
            );
            parse_note_with_id(&text, Persona::Enfp, NoteId::new(format!("i{i:02}"))).unwrap()
        })
        .collect();
    let vault = Vault::new(Embedder::from_model(&model));
    vault
        .put_notes(
            notes
                .iter()
                .map(|n| NoteRecord::new(n.clone(), Vec::new(), None))
                .collect(),
        )
        .unwrap();
    let snapshot = vault.snapshot();

    let probe = &notes[11];
    assert!((model.predict_proba(probe).get(Kind::Idea) - p).abs() < 1e-12);
    assert!(model.predict_labels(probe).contains(Kind::Idea));

    let orch = Orchestrator::in_memory(model);
    let ids: Vec<String> = notes[..10]
        .iter()
        .flat_map(|n| orch.suggest_for(n, &snapshot).unwrap())
        .filter(|s| s.kind_trigger == Kind::Idea)
        .map(|s| s.id)
        .collect();
    assert_eq!(ids.len(), 10);
    for id in ids {
        orch.record_feedback(FeedbackEvent::new(id, Action::Dismiss, None))
            .unwrap();
    }
    let live = orch.model();
    assert_eq!(live.thresholds.get(Kind::Idea), 0.6);
    assert!(!live.predict_labels(probe).contains(Kind::Idea));
    assert!(orch.suggest_for(probe, &snapshot).unwrap().is_empty());
}
