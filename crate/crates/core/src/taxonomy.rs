//! The closed 20-kind taxonomy, label sets over it, and per-kind score vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of kinds in the taxonomy.
pub const KIND_COUNT: usize = 20;

/// A semantic kind a note fragment can be routed to.
///
/// Discriminants follow the frequency order of the reference corpus, so
/// `Kind::ALL[0]` is the most frequent kind and the last three are singletons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Task = 0,
    Insight,
    Idea,
    Suggestion,
    Theme,
    Goal,
    Risk,
    Requirement,
    Decision,
    Fact,
    ToolFeature,
    Habit,
    Draft,
    Artifact,
    Event,
    Strategy,
    Activity,
    Solution,
    UiAction,
    Communication,
}

impl Kind {
    pub const ALL: [Kind; KIND_COUNT] = [
        Kind::Task,
        Kind::Insight,
        Kind::Idea,
        Kind::Suggestion,
        Kind::Theme,
        Kind::Goal,
        Kind::Risk,
        Kind::Requirement,
        Kind::Decision,
        Kind::Fact,
        Kind::ToolFeature,
        Kind::Habit,
        Kind::Draft,
        Kind::Artifact,
        Kind::Event,
        Kind::Strategy,
        Kind::Activity,
        Kind::Solution,
        Kind::UiAction,
        Kind::Communication,
    ];

    /// QA-passed concept counts per kind in the released persona dataset,
    /// aligned with [`Kind::ALL`].
    pub const REFERENCE_COUNTS: [u64; KIND_COUNT] = [
        5170, 1209, 650, 394, 254, 202, 158, 130, 51, 37, 35, 21, 16, 7, 5, 4, 3, 1, 1, 1,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Kind> {
        Kind::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Task => "task",
            Kind::Insight => "insight",
            Kind::Idea => "idea",
            Kind::Suggestion => "suggestion",
            Kind::Theme => "theme",
            Kind::Goal => "goal",
            Kind::Risk => "risk",
            Kind::Requirement => "requirement",
            Kind::Decision => "decision",
            Kind::Fact => "fact",
            Kind::ToolFeature => "tool_feature",
            Kind::Habit => "habit",
            Kind::Draft => "draft",
            Kind::Artifact => "artifact",
            Kind::Event => "event",
            Kind::Strategy => "strategy",
            Kind::Activity => "activity",
            Kind::Solution => "solution",
            Kind::UiAction => "ui_action",
            Kind::Communication => "communication",
        }
    }
}

/// The taxonomy in reference-frequency order.
pub fn taxonomy() -> &'static [Kind; KIND_COUNT] {
    &Kind::ALL
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for Kind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// A set of kinds, stored as a bitmask over [`Kind::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet(u32);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);
    pub const FULL: LabelSet = LabelSet((1 << KIND_COUNT) - 1);

    pub fn new() -> Self {
        Self::EMPTY
    }

    pub fn from_bits(bits: u32) -> Self {
        LabelSet(bits & Self::FULL.0)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn insert(&mut self, kind: Kind) -> bool {
        let had = self.contains(kind);
        self.0 |= 1 << kind.index();
        !had
    }

    pub fn remove(&mut self, kind: Kind) -> bool {
        let had = self.contains(kind);
        self.0 &= !(1 << kind.index());
        had
    }

    pub fn contains(self, kind: Kind) -> bool {
        self.0 & (1 << kind.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    /// Kinds in taxonomy order.
    pub fn iter(self) -> impl Iterator<Item = Kind> {
        Kind::ALL.into_iter().filter(move |k| self.contains(*k))
    }
}

impl FromIterator<Kind> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Kind>>(iter: I) -> Self {
        let mut set = LabelSet::EMPTY;
        for k in iter {
            set.insert(k);
        }
        set
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, k) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(k.as_str())?;
        }
        f.write_str("}")
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let kinds = Vec::<Kind>::deserialize(deserializer)?;
        let mut set = LabelSet::EMPTY;
        for k in kinds {
            if !set.insert(k) {
                return Err(serde::de::Error::custom(format!("duplicate kind {k}")));
            }
        }
        Ok(set)
    }
}

/// One real value per kind, indexed by [`Kind::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindScores(pub [f64; KIND_COUNT]);

impl KindScores {
    pub fn splat(value: f64) -> Self {
        KindScores([value; KIND_COUNT])
    }

    pub fn get(&self, kind: Kind) -> f64 {
        self.0[kind.index()]
    }

    pub fn set(&mut self, kind: Kind, value: f64) {
        self.0[kind.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Kind, f64)> + '_ {
        Kind::ALL.iter().map(move |k| (*k, self.0[k.index()]))
    }

    /// Kinds whose score reaches the matching threshold (`>=`).
    pub fn threshold(&self, thresholds: &KindScores) -> LabelSet {
        Kind::ALL
            .into_iter()
            .filter(|k| self.get(*k) >= thresholds.get(*k))
            .collect()
    }
}

impl Default for KindScores {
    fn default() -> Self {
        KindScores::splat(0.0)
    }
}

// Serialized as a `{kind: value}` map so external files stay readable.
impl Serialize for KindScores {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.iter().map(|(k, v)| (k.as_str(), v)))
    }
}

impl<'de> Deserialize<'de> for KindScores {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Map(std::collections::BTreeMap<Kind, f64>),
            List(Vec<f64>),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Map(map) => {
                if map.len() != KIND_COUNT {
                    return Err(serde::de::Error::custom(format!(
                        "expected {KIND_COUNT} kinds, got {}",
                        map.len()
                    )));
                }
                let mut scores = KindScores::default();
                for (k, v) in map {
                    scores.set(k, v);
                }
                Ok(scores)
            }
            Repr::List(values) => {
                let arr: [f64; KIND_COUNT] = values.try_into().map_err(|v: Vec<f64>| {
                    serde::de::Error::custom(format!("expected {KIND_COUNT} values, got {}", v.len()))
                })?;
                Ok(KindScores(arr))
            }
        }
    }
}
