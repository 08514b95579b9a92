//! Persona profiles and eight-week scenario plans.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::note::Persona;

pub const PLAN_WEEKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WritingStyle {
    /// Positive values favor longer sentences.
    pub sentence_length_bias: f64,
    /// 0 = casual, 1 = formal.
    pub formality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPlan {
    pub weeks: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("plan must span exactly {PLAN_WEEKS} weeks, got {0}")]
    PlanLength(usize),
    #[error("week {0} must have 1 to 7 day entries, got {1}")]
    WeekLength(usize, usize),
    #[error("profile for {0} has no interests")]
    NoInterests(Persona),
}

impl WeeklyPlan {
    pub fn new(weeks: Vec<Vec<String>>) -> Result<Self, ProfileError> {
        if weeks.len() != PLAN_WEEKS {
            return Err(ProfileError::PlanLength(weeks.len()));
        }
        for (i, w) in weeks.iter().enumerate() {
            if w.is_empty() || w.len() > 7 {
                return Err(ProfileError::WeekLength(i, w.len()));
            }
        }
        Ok(WeeklyPlan { weeks })
    }

    /// Scenario prompt for a day offset from the plan start.
    pub fn scenario(&self, day: usize) -> &str {
        let week = &self.weeks[(day / 7).min(PLAN_WEEKS - 1)];
        &week[(day % 7) % week.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub persona: Persona,
    pub routines: Vec<String>,
    pub interests: Vec<String>,
    pub style: WritingStyle,
    pub plan: WeeklyPlan,
}

impl PersonaProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.interests.is_empty() {
            return Err(ProfileError::NoInterests(self.persona));
        }
        WeeklyPlan::new(self.plan.weeks.clone()).map(|_| ())
    }
}

const ANALYST_INTERESTS: &[&str] = &[
    "data pipeline",
    "chess openings",
    "compiler design",
    "market research",
    "quarterly roadmap",
    "classifier figure",
    "budget model",
    "api migration",
    "graph database",
    "benchmark suite",
];
const DIPLOMAT_INTERESTS: &[&str] = &[
    "poetry workshop",
    "mentoring program",
    "community garden",
    "novel outline",
    "volunteer drive",
    "wellbeing survey",
    "photo essay",
    "language exchange",
    "podcast episode",
    "art journal",
];
const SENTINEL_INTERESTS: &[&str] = &[
    "inventory audit",
    "onboarding checklist",
    "family calendar",
    "expense report",
    "compliance review",
    "meal prep",
    "home renovation",
    "policy handbook",
    "shift schedule",
    "training manual",
];
const EXPLORER_INTERESTS: &[&str] = &[
    "trail running",
    "pop-up event",
    "guitar practice",
    "street photography",
    "food truck",
    "rock climbing",
    "product launch",
    "travel vlog",
    "dance class",
    "hackathon demo",
];

const ROUTINES: &[&str] = &[
    "morning standup",
    "evening walk by the lake",
    "lunch break journaling",
    "weekly review on Sunday",
    "commute reading",
    "late-night coding",
    "gym before work",
    "coffee shop planning session",
    "team retro on Friday",
    "weekend farmers market",
];

const SCENARIOS: &[&str] = &[
    "a busy day of meetings",
    "a quiet focus day",
    "a deadline crunch",
    "a day working from a cafe",
    "a weekend reset",
    "a day of travel",
    "a planning session",
    "an unexpected schedule change",
    "a day spent helping a friend",
    "a long walk to clear the head",
    "a workshop day",
    "a review day",
];

fn interest_pool(persona: Persona) -> &'static [&'static str] {
    match (persona.is_intuitive(), persona.is_feeling(), persona.is_judging()) {
        (true, false, _) => ANALYST_INTERESTS,
        (true, true, _) => DIPLOMAT_INTERESTS,
        (false, _, true) => SENTINEL_INTERESTS,
        (false, _, false) => EXPLORER_INTERESTS,
    }
}

/// Built-in profile for a persona, deterministic in `seed`.
pub fn default_profile(persona: Persona, seed: u64) -> PersonaProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(persona.index() as u64 + 1)));
    let mut interests: Vec<String> = interest_pool(persona).iter().map(|s| s.to_string()).collect();
    interests.shuffle(&mut rng);
    interests.truncate(6);

    let mut routines: Vec<String> = ROUTINES.iter().map(|s| s.to_string()).collect();
    routines.shuffle(&mut rng);
    routines.truncate(3);

    let style = WritingStyle {
        sentence_length_bias: if persona.is_introvert() { 0.4 } else { -0.2 } + rng.gen_range(-0.1..0.1),
        formality: if persona.is_judging() { 0.7 } else { 0.35 } + rng.gen_range(-0.1..0.1),
    };

    let weeks = (0..PLAN_WEEKS)
        .map(|w| {
            let days = rng.gen_range(5..=7);
            (0..days)
                .map(|_| {
                    let scenario = SCENARIOS.choose(&mut rng).unwrap();
                    let interest = &interests[(w + rng.gen_range(0..interests.len())) % interests.len()];
                    let routine = routines.choose(&mut rng).unwrap();
                    format!("{scenario} around the {interest}, after the {routine}")
                })
                .collect()
        })
        .collect();

    PersonaProfile {
        persona,
        routines,
        interests,
        style,
        plan: WeeklyPlan::new(weeks).expect("built-in plan is well formed"),
    }
}

pub fn default_profiles(seed: u64) -> Vec<PersonaProfile> {
    Persona::ALL.iter().map(|p| default_profile(*p, seed)).collect()
}
