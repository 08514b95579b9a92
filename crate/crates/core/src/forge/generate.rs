//! Persona-driven synthetic note generation.

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::concept::{CanonicalScores, Concept, QaStatus};
use crate::forge::client::{build_prompt, ClientError, PromptTask, TextClient};
use crate::forge::corpus::CorpusEntry;
use crate::forge::lexicon::{self, Slots};
use crate::forge::profile::{PersonaProfile, PLAN_WEEKS};
use crate::forge::route::{route_concepts, RoutingError};
use crate::hash::splitmix64;
use crate::note::{Note, NoteHeader, NoteId, Persona};
use crate::taxonomy::{Kind, KIND_COUNT};

const PLAN_DAYS: usize = PLAN_WEEKS * 7;
/// Notes are written between 07:00 and 22:59.
const DAY_START_MINUTE: usize = 7 * 60;
const MINUTES_PER_DAY: usize = 16 * 60;

/// Probability of 1..=5 concepts per note (mean 2.7).
const CONCEPTS_PER_NOTE: [f64; 5] = [0.2, 0.25, 0.3, 0.15, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    #[default]
    Template,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub seed: u64,
    pub personas: Vec<Persona>,
    /// Inclusive `(min, max)` notes per persona.
    pub notes_per_persona: (usize, usize),
    pub mode: GenerationMode,
    /// Number of past notes offered as context to the next one.
    pub history_window: usize,
    pub start_date: NaiveDate,
    /// Relative kind weights; defaults to the reference distribution.
    pub kind_counts: [f64; KIND_COUNT],
    /// Laplace pseudo-count added to every kind weight.
    pub smoothing: f64,
    /// Fraction of concepts whose prose analysis disagrees with its scores.
    pub inconsistency_rate: f64,
    /// Worker-count hint; output does not depend on it.
    pub workers: Option<usize>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed: 0,
            personas: Persona::ALL.to_vec(),
            notes_per_persona: (50, 360),
            mode: GenerationMode::Template,
            history_window: 3,
            start_date: NaiveDate::from_ymd_opt(2023, 7, 3).expect("valid date"),
            kind_counts: Kind::REFERENCE_COUNTS.map(|c| c as f64),
            smoothing: 1.0,
            inconsistency_rate: 0.0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

impl GenerationConfig {
    fn validate(&self, profiles: &[PersonaProfile]) -> Result<(), GenerateError> {
        let (min, max) = self.notes_per_persona;
        if self.personas.is_empty() {
            return Err(GenerateError::Config("persona set is empty".into()));
        }
        if min < 1 || min > max {
            return Err(GenerateError::Config(format!(
                "invalid notes_per_persona ({min}, {max})"
            )));
        }
        if max > PLAN_DAYS * MINUTES_PER_DAY {
            return Err(GenerateError::Config(format!(
                "at most {} notes fit in the plan",
                PLAN_DAYS * MINUTES_PER_DAY
            )));
        }
        for p in &self.personas {
            let profile = profiles
                .iter()
                .find(|pr| pr.persona == *p)
                .ok_or_else(|| GenerateError::Config(format!("no profile for persona {p}")))?;
            profile.validate().map_err(|e| GenerateError::Config(e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&self.inconsistency_rate) {
            return Err(GenerateError::Config("inconsistency_rate must be in [0, 1]".into()));
        }
        let total: f64 = self.kind_counts.iter().map(|c| c + self.smoothing).sum();
        if self.kind_counts.iter().any(|c| *c < 0.0) || self.smoothing < 0.0 || total <= 0.0 {
            return Err(GenerateError::Config(
                "kind prior must be non-negative and not all zero".into(),
            ));
        }
        Ok(())
    }

    /// Smoothed kind prior, normalized.
    pub fn kind_prior(&self) -> [f64; KIND_COUNT] {
        let total: f64 = self.kind_counts.iter().map(|c| c + self.smoothing).sum();
        self.kind_counts.map(|c| (c + self.smoothing) / total)
    }
}

fn persona_seed(seed: u64, persona: Persona) -> u64 {
    let mut s = seed ^ (persona.index() as u64 + 1).wrapping_mul(0xa076_1d64_78bd_642f);
    splitmix64(&mut s)
}

/// Notes per persona: spread evenly across the range in a seed-shuffled order,
/// so every run spans both extremes. A single persona draws uniformly.
fn note_counts(cfg: &GenerationConfig) -> Vec<usize> {
    let (min, max) = cfg.notes_per_persona;
    let n = cfg.personas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if n == 1 {
        return vec![rng.gen_range(min..=max)];
    }
    let mut counts: Vec<usize> = (0..n)
        .map(|i| min + ((max - min) as f64 * i as f64 / (n - 1) as f64).round() as usize)
        .collect();
    counts.shuffle(&mut rng);
    counts
}

/// Generate a corpus. Output is ordered by note id and independent of the
/// worker count.
pub fn generate_corpus(
    profiles: &[PersonaProfile],
    cfg: &GenerationConfig,
    client: Option<&dyn TextClient>,
) -> Result<Vec<CorpusEntry>, GenerateError> {
    cfg.validate(profiles)?;
    if cfg.mode == GenerationMode::Client && client.is_none() {
        return Err(GenerateError::Config("client mode requires a text client".into()));
    }
    let counts = note_counts(cfg);
    let jobs: Vec<(&PersonaProfile, usize)> = cfg
        .personas
        .iter()
        .zip(counts)
        .map(|(p, n)| (profiles.iter().find(|pr| pr.persona == *p).expect("validated"), n))
        .collect();

    let run = || -> Result<Vec<Vec<CorpusEntry>>, GenerateError> {
        jobs.par_iter()
            .map(|(profile, n)| generate_persona(profile, *n, cfg, client))
            .collect()
    };
    let per_persona = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| GenerateError::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let mut corpus: Vec<CorpusEntry> = per_persona.into_iter().flatten().collect();
    corpus.sort_by(|a, b| a.note.id.cmp(&b.note.id));
    Ok(corpus)
}

struct PastNote {
    date: NaiveDate,
    topic: String,
    content: String,
}

fn generate_persona(
    profile: &PersonaProfile,
    n: usize,
    cfg: &GenerationConfig,
    client: Option<&dyn TextClient>,
) -> Result<Vec<CorpusEntry>, GenerateError> {
    let persona = profile.persona;
    let mut rng = ChaCha8Rng::seed_from_u64(persona_seed(cfg.seed, persona));
    let prior = WeightedIndex::new(cfg.kind_prior()).expect("validated prior");
    let per_note = WeightedIndex::new(CONCEPTS_PER_NOTE).expect("static weights");

    let mut slots: Vec<usize> = index::sample(&mut rng, PLAN_DAYS * MINUTES_PER_DAY, n).into_vec();
    slots.sort_unstable();

    let mut history: Vec<PastNote> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for (seq, slot) in slots.into_iter().enumerate() {
        let day = slot / MINUTES_PER_DAY;
        let minute = DAY_START_MINUTE + slot % MINUTES_PER_DAY;
        let date = cfg.start_date + Duration::days(day as i64);
        let time = NaiveTime::from_hms_opt((minute / 60) as u32, (minute % 60) as u32, 0).expect("in range");
        let header = NoteHeader::new(
            date,
            time,
            *lexicon::LOCATIONS.choose(&mut rng).unwrap(),
            *lexicon::DEVICES.choose(&mut rng).unwrap(),
            *lexicon::WEATHER.choose(&mut rng).unwrap(),
        )
        .expect("catalog fields are nonempty");
        let id = NoteId::new(format!("{}-{:04}", persona.as_str(), seq + 1));
        let scenario = profile.plan.scenario(day);
        let topic = profile
            .interests
            .iter()
            .find(|i| scenario.contains(i.as_str()))
            .unwrap_or(&profile.interests[0])
            .clone();
        let n_concepts = per_note.sample(&mut rng) + 1;
        let kinds: Vec<Kind> = (0..n_concepts).map(|_| Kind::ALL[prior.sample(&mut rng)]).collect();
        let window_start = history.len().saturating_sub(cfg.history_window);
        let context = &history[window_start..];

        let (note, concepts) = match cfg.mode {
            GenerationMode::Template => {
                let drafted = template_note(profile, scenario, &topic, &kinds, context, cfg, &mut rng);
                let content: Vec<&str> = drafted.iter().map(|(s, _)| s.as_str()).collect();
                let note = Note::new(id, persona, header, join_sentences(&content)).expect("nonempty content");
                let concepts = drafted
                    .iter()
                    .filter_map(|(s, c)| c.as_ref().map(|c| (s, c)))
                    .enumerate()
                    .map(|(i, (sentence, gold))| gold.to_concept(&note, i + 1, sentence))
                    .collect();
                (note, concepts)
            }
            GenerationMode::Client => {
                let client = client.expect("checked above");
                let prompt = build_prompt(
                    PromptTask::GenerateNote,
                    &format!(
                        "Write one short personal note in the voice of an {persona} persona. Routines: {}. \
                         Formality {:.2}. Cover these kinds of content: {}. Reply with the note text only.",
                        profile.routines.join(", "),
                        profile.style.formality,
                        kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
                    ),
                    &json!({
                        "persona": persona,
                        "scenario": scenario,
                        "topic": topic,
                        "kinds": kinds,
                        "history": context.iter().map(|p| &p.content).collect::<Vec<_>>(),
                    }),
                );
                let content = client.complete(&prompt)?;
                let note =
                    Note::new(id, persona, header, content).map_err(|e| ClientError::Malformed(e.to_string()))?;
                let concepts = route_concepts(&note, Some(client), 1)?;
                (note, concepts)
            }
        };
        history.push(PastNote {
            date,
            topic,
            content: note.content().to_string(),
        });
        out.push(CorpusEntry::new(note, concepts));
    }
    Ok(out)
}

fn join_sentences(sentences: &[&str]) -> String {
    let mut out = String::new();
    for s in sentences {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(s);
        if !s.ends_with(['?', '!', '.']) {
            out.push('.');
        }
    }
    out
}

struct GoldConcept {
    kind: Kind,
    entities: Vec<String>,
    scores: [f64; 5],
    analysis: String,
}

impl GoldConcept {
    fn to_concept(&self, note: &Note, ordinal: usize, sentence: &str) -> Concept {
        Concept {
            id: format!("{}#c{}", note.id, ordinal),
            note_id: note.id.clone(),
            kind: self.kind,
            summary: sentence.trim_end_matches(['.', '?', '!']).to_string(),
            entities: self.entities.clone(),
            analysis: self.analysis.clone(),
            scores: CanonicalScores::from_array(self.scores),
            qa_status: QaStatus::Pending,
            cognitive_state: None,
        }
    }
}

/// Sentences of one template note, each optionally carrying its gold concept.
fn template_note(
    profile: &PersonaProfile,
    scenario: &str,
    topic: &str,
    kinds: &[Kind],
    context: &[PastNote],
    cfg: &GenerationConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<(String, Option<GoldConcept>)> {
    let persona = profile.persona;
    let mut sentences: Vec<(String, Option<GoldConcept>)> = Vec::new();
    if rng.gen_bool(0.6) {
        sentences.push((format!("Today was {scenario}"), None));
    }
    if let Some(past) = context.iter().rev().find(|p| p.topic == topic).or(context.last()) {
        if rng.gen_bool(0.3) {
            sentences.push((
                format!(
                    "Following up on the note from {} about the {}",
                    past.date.format("%b %-d"),
                    past.topic
                ),
                None,
            ));
        }
    }
    for kind in kinds {
        let this_topic = if rng.gen_bool(0.8) {
            topic.to_string()
        } else {
            profile.interests.choose(rng).unwrap().clone()
        };
        let slots = Slots {
            topic: &this_topic,
            person: lexicon::PEOPLE.choose(rng).unwrap(),
            tool: lexicon::TOOLS.choose(rng).unwrap(),
            time: lexicon::TIMES.choose(rng).unwrap(),
            day: lexicon::DAYS.choose(rng).unwrap(),
        };
        let persona_phrasing = lexicon::PERSONA_TEMPLATES
            .iter()
            .find(|t| (t.resolve)(persona) == *kind)
            .filter(|_| rng.gen_bool(0.3));
        let template = match persona_phrasing {
            Some(t) => t.text,
            None => lexicon::templates(*kind).choose(rng).unwrap(),
        };
        let mut sentence = lexicon::fill_template(template, &slots);
        if !sentence.ends_with('?') {
            sentence.push_str(style_suffix(profile, rng));
        }

        let entities: Vec<String> = [
            ("{topic}", slots.topic),
            ("{person}", slots.person),
            ("{tool}", slots.tool),
        ]
        .into_iter()
        .filter(|(slot, _)| template.contains(slot))
        .map(|(_, v)| v.to_string())
        .collect();
        let base = lexicon::score_profile(*kind);
        let scores = base.map(|b| ((b + rng.gen_range(-0.12..0.12)).clamp(0.0, 1.0) * 100.0).round() / 100.0);
        let described = if rng.gen_bool(cfg.inconsistency_rate) {
            scores.map(|s| {
                if s < 0.5 {
                    (s + 0.45).min(1.0)
                } else {
                    (s - 0.45).max(0.0)
                }
            })
        } else {
            scores
        };
        sentences.push((
            sentence,
            Some(GoldConcept {
                kind: *kind,
                entities,
                scores,
                analysis: lexicon::describe_scores(*kind, described),
            }),
        ));
    }
    if rng.gen_bool(0.3) {
        sentences.push((format!("Feeling {} today", lexicon::MOODS.choose(rng).unwrap()), None));
    }
    sentences
}

fn style_suffix(profile: &PersonaProfile, rng: &mut ChaCha8Rng) -> &'static str {
    let p = profile.persona;
    if !rng.gen_bool(0.3) {
        return "";
    }
    match (p.is_feeling(), profile.style.sentence_length_bias > 0.0) {
        (true, true) => ", and that feels meaningful when I think it over",
        (true, false) => ", which feels right",
        (false, true) => ", at least by my reading of the numbers so far",
        (false, false) => ", plain and simple",
    }
}
