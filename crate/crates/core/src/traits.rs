//! The sixteen personality factors and their canonical ordering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of Cattell's sixteen personality factors.
///
/// The declaration order is the canonical order used for plan enumeration,
/// tie-breaking and every report layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TraitId {
    Warmth,
    Intellect,
    EmotionalStability,
    Assertiveness,
    Gregariousness,
    Dutifulness,
    Friendliness,
    Sensitivity,
    Distrust,
    Imagination,
    Reserve,
    Anxiety,
    Complexity,
    Introversion,
    Orderliness,
    Emotionality,
}

impl TraitId {
    pub const COUNT: usize = 16;

    pub const ALL: [TraitId; 16] = [
        TraitId::Warmth,
        TraitId::Intellect,
        TraitId::EmotionalStability,
        TraitId::Assertiveness,
        TraitId::Gregariousness,
        TraitId::Dutifulness,
        TraitId::Friendliness,
        TraitId::Sensitivity,
        TraitId::Distrust,
        TraitId::Imagination,
        TraitId::Reserve,
        TraitId::Anxiety,
        TraitId::Complexity,
        TraitId::Introversion,
        TraitId::Orderliness,
        TraitId::Emotionality,
    ];

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<TraitId> {
        Self::ALL.get(index).copied()
    }

    /// Upper-case identifier as spelled in bank files, e.g. `EMOTIONAL_STABILITY`.
    pub fn code(self) -> &'static str {
        match self {
            TraitId::Warmth => "WARMTH",
            TraitId::Intellect => "INTELLECT",
            TraitId::EmotionalStability => "EMOTIONAL_STABILITY",
            TraitId::Assertiveness => "ASSERTIVENESS",
            TraitId::Gregariousness => "GREGARIOUSNESS",
            TraitId::Dutifulness => "DUTIFULNESS",
            TraitId::Friendliness => "FRIENDLINESS",
            TraitId::Sensitivity => "SENSITIVITY",
            TraitId::Distrust => "DISTRUST",
            TraitId::Imagination => "IMAGINATION",
            TraitId::Reserve => "RESERVE",
            TraitId::Anxiety => "ANXIETY",
            TraitId::Complexity => "COMPLEXITY",
            TraitId::Introversion => "INTROVERSION",
            TraitId::Orderliness => "ORDERLINESS",
            TraitId::Emotionality => "EMOTIONALITY",
        }
    }

    /// Human-readable name used inside prompts, e.g. `Emotional Stability`.
    pub fn display_name(self) -> &'static str {
        match self {
            TraitId::Warmth => "Warmth",
            TraitId::Intellect => "Intellect",
            TraitId::EmotionalStability => "Emotional Stability",
            TraitId::Assertiveness => "Assertiveness",
            TraitId::Gregariousness => "Gregariousness",
            TraitId::Dutifulness => "Dutifulness",
            TraitId::Friendliness => "Friendliness",
            TraitId::Sensitivity => "Sensitivity",
            TraitId::Distrust => "Distrust",
            TraitId::Imagination => "Imagination",
            TraitId::Reserve => "Reserve",
            TraitId::Anxiety => "Anxiety",
            TraitId::Complexity => "Complexity",
            TraitId::Introversion => "Introversion",
            TraitId::Orderliness => "Orderliness",
            TraitId::Emotionality => "Emotionality",
        }
    }
}

impl fmt::Display for TraitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown trait `{0}`")]
pub struct UnknownTrait(pub String);

impl FromStr for TraitId {
    type Err = UnknownTrait;

    /// Exact canonical spelling only; bank files must match it.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraitId::ALL
            .iter()
            .copied()
            .find(|t| t.code() == s)
            .ok_or_else(|| UnknownTrait(s.to_string()))
    }
}

/// Parses a trait name leniently for command-line use: case-insensitive,
/// with spaces or hyphens accepted in place of underscores.
pub fn parse_trait_loose(s: &str) -> Result<TraitId, UnknownTrait> {
    let normalized: String = s
        .trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_uppercase(),
        })
        .collect();
    normalized.parse().map_err(|_| UnknownTrait(s.to_string()))
}
