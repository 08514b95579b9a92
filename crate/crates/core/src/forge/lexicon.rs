//! Sentence templates and cue patterns shared by the template generator and
//! the rule-based concept router.

use std::sync::OnceLock;

use regex::Regex;

use crate::note::Persona;
use crate::taxonomy::Kind;

/// Slot placeholders: `{topic}`, `{person}`, `{tool}`, `{time}`, `{day}`.
pub fn templates(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Task => &[
            "Deliverable check-in at {time} — draft the {topic} figure",
            "Todo: finish the {topic} slides before {day}",
            "Need to send {person} the {topic} notes by {day}",
            "Remember to book a review of the {topic} with {person}",
            "Bug triage at {time} for the {tool} backlog",
            "Prepare update for the {topic} project",
            "Task review at {time}: close out the {topic} tickets",
        ],
        Kind::Insight => &[
            "I realize the {topic} works better when I slow down",
            "It struck me that {person} sees the {topic} differently",
            "Lesson learned: the {topic} needs more context up front",
            "Looking back, the {topic} was less about speed than focus",
        ],
        Kind::Idea => &[
            "What if we turned the {topic} into a small game?",
            "Idea: combine the {topic} with {tool}",
            "Maybe I could sketch a prototype for the {topic}",
            "Wild thought: a {tool} plugin for the {topic}",
        ],
        Kind::Suggestion => &[
            "{person} should try {tool} for the {topic}",
            "It might help to suggest {tool} to {person}",
            "I'd recommend the team reviews the {topic} weekly",
        ],
        Kind::Theme => &[
            "A recurring theme this week is the {topic}",
            "Everything keeps circling back to the {topic}",
            "The common thread today was the {topic}",
        ],
        Kind::Goal => &[
            "My goal for the week is to get better at the {topic}",
            "By the end of the month I want to master the {topic}",
            "Aiming to wrap up the {topic} by {day}",
        ],
        Kind::Risk => &[
            "Risk: the {topic} could slip if {person} is out",
            "Worried that {tool} might break before the {topic} demo",
            "The {topic} deadline is at risk",
        ],
        Kind::Requirement => &[
            "The {topic} must support offline mode",
            "Requirement: {tool} needs to export CSV",
            "The {topic} has to meet the accessibility checklist",
        ],
        Kind::Decision => &[
            "Decided to move the {topic} to {tool}",
            "We agreed to drop the {topic} for now",
            "Final call: {person} owns the {topic}",
        ],
        Kind::Fact => &[
            "Fact: {tool} stores timestamps in UTC",
            "The {topic} sessions average forty minutes",
            "For the record, the {topic} started in 2019",
        ],
        Kind::ToolFeature => &[
            "{tool} now has a dark mode toggle",
            "The new {tool} shortcut saves me time",
            "Noticed {tool} can sync tags automatically",
        ],
        Kind::Habit => &[
            "Every morning I journal about the {topic}",
            "Keeping my daily streak of {topic} practice",
            "I always review the {topic} before bed",
        ],
        Kind::Draft => &[
            "Rough draft of the {topic} intro is in my notebook",
            "First pass at the {topic} email, needs polish",
            "Outline for the {topic}: context, problem, plan",
        ],
        Kind::Artifact => &[
            "Saved the {topic} diagram to the shared drive",
            "Exported the {topic} slides as PDF",
            "Uploaded the {topic} spreadsheet",
        ],
        Kind::Event => &[
            "The {topic} meetup is on {day} at {time}",
            "Conference session on the {topic} at {time}",
            "Team lunch with {person} on {day} at {time}",
        ],
        Kind::Strategy => &[
            "Long-term strategy: focus the {topic} on retention",
            "Our approach to the {topic} is to start small and iterate",
        ],
        Kind::Activity => &[
            "Went for a run after thinking about the {topic}",
            "Spent the afternoon painting while mulling over the {topic}",
            "Played chess with {person} in the evening",
        ],
        Kind::Solution => &[
            "Fixed the {tool} crash by clearing the cache",
            "The workaround for the {topic} is to pin the version",
        ],
        Kind::UiAction => &[
            "Clicked the {tool} sidebar toggle to hide the {topic}",
            "Dragged the {topic} card into the done column",
        ],
        Kind::Communication => &[
            "Emailed {person} about the {topic}",
            "Called {person} to talk through the {topic}",
        ],
    }
}

/// Phrasings whose kind depends on who wrote them.
pub struct PersonaTemplate {
    pub text: &'static str,
    pub cue: &'static str,
    pub resolve: fn(Persona) -> Kind,
}

pub const PERSONA_TEMPLATES: &[PersonaTemplate] = &[
    PersonaTemplate {
        text: "I keep coming back to the {topic}",
        cue: r"\bkeep coming back\b",
        resolve: |p| if p.is_feeling() { Kind::Insight } else { Kind::Theme },
    },
    PersonaTemplate {
        text: "There might be something worth trying with the {topic}",
        cue: r"\bsomething worth trying\b",
        resolve: |p| if p.is_intuitive() { Kind::Idea } else { Kind::Suggestion },
    },
];

fn cue_pattern(kind: Kind) -> &'static str {
    match kind {
        Kind::Task => r"\b(deliverable|todo|to-do|need to|remember to|bug triage|prepare update|task review)\b",
        Kind::Insight => r"\b(realize|struck me|lesson learned|looking back)\b",
        Kind::Idea => r"\b(what if|idea:|sketch a prototype|wild thought)",
        Kind::Suggestion => r"\b(should try|suggest|recommend)",
        Kind::Theme => r"\b(recurring theme|circling back|common thread)\b",
        Kind::Goal => r"\b(goals?|want to master|aiming to)\b",
        Kind::Risk => r"\b(risk|worried that|could slip)\b",
        Kind::Requirement => r"\b(must support|requirement|has to meet|needs to export)\b",
        Kind::Decision => r"\b(decided|agreed to|final call)\b",
        Kind::Fact => r"\b(fact:|average|for the record)",
        Kind::ToolFeature => r"\b(dark mode|shortcut|sync tags|now has)\b",
        Kind::Habit => r"\b(every morning|daily streak|always review|before bed)\b",
        Kind::Draft => r"\b(rough draft|first pass|outline for)\b",
        Kind::Artifact => r"\b(saved the|exported|uploaded|shared drive)\b",
        Kind::Event => r"\b(meetup|conference|team lunch)\b",
        Kind::Strategy => r"\b(strategy|our approach|start small)\b",
        Kind::Activity => r"\b(went for a run|spent the afternoon|played)\b",
        Kind::Solution => r"\b(fixed the|workaround)\b",
        Kind::UiAction => r"\b(clicked|dragged)\b",
        Kind::Communication => r"\b(emailed|called|phoned)\b",
    }
}

struct Cues {
    by_kind: Vec<(Kind, Regex)>,
    persona: Vec<(Regex, fn(Persona) -> Kind)>,
}

fn cues() -> &'static Cues {
    static CUES: OnceLock<Cues> = OnceLock::new();
    CUES.get_or_init(|| {
        // Rare, specific cues are tried first; `task` is the catch-all verb set.
        let by_kind = Kind::ALL
            .iter()
            .rev()
            .map(|k| (*k, Regex::new(&format!("(?i){}", cue_pattern(*k))).expect("valid cue")))
            .collect();
        let persona = PERSONA_TEMPLATES
            .iter()
            .map(|t| (Regex::new(&format!("(?i){}", t.cue)).expect("valid cue"), t.resolve))
            .collect();
        Cues { by_kind, persona }
    })
}

/// Kind suggested by the cue lexicon for one sentence, if any.
pub fn classify_sentence(sentence: &str, persona: Persona) -> Option<Kind> {
    let cues = cues();
    if let Some((_, resolve)) = cues.persona.iter().find(|(re, _)| re.is_match(sentence)) {
        return Some(resolve(persona));
    }
    cues.by_kind
        .iter()
        .find(|(_, re)| re.is_match(sentence))
        .map(|(k, _)| *k)
}

pub const PEOPLE: &[&str] = &["Maya", "Jordan", "Priya", "Alex", "Sam", "Lena", "Omar", "Chen"];
pub const TOOLS: &[&str] = &[
    "Notion", "Figma", "VS Code", "Slack", "Trello", "Obsidian", "Jira", "Excel",
];
pub const TIMES: &[&str] = &["9:00 AM", "10:00 AM", "1:00 PM", "5:00 PM", "14:30", "08:15", "3:30 PM"];
pub const DAYS: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];
pub const MOODS: &[&str] = &["calm", "tired", "energized", "scattered", "hopeful", "restless"];

pub const LOCATIONS: &[&str] = &[
    "Navy Pier, Chicago",
    "Home office",
    "Downtown library",
    "Blue Bottle Coffee",
    "Campus lab",
    "Train to Albany",
    "Riverside park",
    "Co-working space",
    "Kitchen table",
    "Airport lounge",
];
pub const DEVICES: &[&str] = &[
    "iPhone 15",
    "Pixel 8",
    "MacBook Air",
    "iPad Pro",
    "ThinkPad X1",
    "Galaxy S23",
];
pub const WEATHER: &[&str] = &[
    "Clear skies, 32°C",
    "Light rain, 14°C",
    "Overcast, 18°C",
    "Sunny, 25°C",
    "Snow flurries, -2°C",
    "Windy, 11°C",
    "Humid, 29°C",
    "Foggy, 9°C",
];

/// Canonical score profile (telos, logos, ethos, pathos, kairos) typical of a kind.
pub fn score_profile(kind: Kind) -> [f64; 5] {
    match kind {
        Kind::Task => [0.85, 0.5, 0.4, 0.2, 0.8],
        Kind::Insight => [0.5, 0.75, 0.5, 0.6, 0.3],
        Kind::Idea => [0.6, 0.55, 0.35, 0.55, 0.35],
        Kind::Suggestion => [0.55, 0.6, 0.65, 0.35, 0.45],
        Kind::Theme => [0.4, 0.6, 0.45, 0.5, 0.25],
        Kind::Goal => [0.9, 0.5, 0.45, 0.6, 0.55],
        Kind::Risk => [0.5, 0.7, 0.5, 0.55, 0.7],
        Kind::Requirement => [0.7, 0.8, 0.6, 0.15, 0.5],
        Kind::Decision => [0.75, 0.7, 0.6, 0.25, 0.6],
        Kind::Fact => [0.3, 0.85, 0.75, 0.1, 0.2],
        Kind::Event => [0.6, 0.4, 0.4, 0.45, 0.9],
        Kind::Activity => [0.35, 0.3, 0.35, 0.7, 0.45],
        _ => [0.5, 0.55, 0.5, 0.4, 0.45],
    }
}

pub fn level_word(v: f64) -> &'static str {
    if v < 0.35 {
        "low"
    } else if v < 0.65 {
        "moderate"
    } else {
        "high"
    }
}

/// Natural-language analysis that states the scores it justifies.
pub fn describe_scores(kind: Kind, scores: [f64; 5]) -> String {
    let labels = ["purpose", "reasoning", "credibility", "emotion", "timing"];
    let parts: Vec<String> = labels
        .iter()
        .zip(crate::concept::CanonicalScores::NAMES)
        .zip(scores)
        .map(|((label, name), v)| format!("{label} is {} ({name} {v:.2})", level_word(v)))
        .collect();
    let name = kind.as_str().replace('_', " ");
    let article = if name.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "An"
    } else {
        "A"
    };
    format!("{article} {name} statement: {}.", parts.join("; "))
}

pub fn fill_template(template: &str, slots: &Slots<'_>) -> String {
    template
        .replace("{topic}", slots.topic)
        .replace("{person}", slots.person)
        .replace("{tool}", slots.tool)
        .replace("{time}", slots.time)
        .replace("{day}", slots.day)
}

pub struct Slots<'a> {
    pub topic: &'a str,
    pub person: &'a str,
    pub tool: &'a str,
    pub time: &'a str,
    pub day: &'a str,
}
