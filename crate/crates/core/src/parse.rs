//! Turning raw model replies into answers.
//!
//! Normalization is deliberately small and every rule applied is reported
//! in `normalization_applied`, so no accepted answer is silently coerced.

use serde::{Deserialize, Serialize};

use crate::prompt::AnswerSpace;
use crate::scoring::Letter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationRule {
    Trim,
    StripPunct,
    Uppercase,
    FallbackToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerKind {
    Letter,
    Digit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub letter: Option<Letter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digit: Option<u8>,
    pub normalization_applied: Vec<NormalizationRule>,
}

impl ParsedAnswer {
    fn letter(l: Letter, rules: Vec<NormalizationRule>) -> Self {
        ParsedAnswer { kind: AnswerKind::Letter, letter: Some(l), digit: None, normalization_applied: rules }
    }

    fn digit(d: u8, rules: Vec<NormalizationRule>) -> Self {
        ParsedAnswer { kind: AnswerKind::Digit, letter: None, digit: Some(d), normalization_applied: rules }
    }

    /// The exact reply form that would parse to this answer with no normalization.
    pub fn canonical(&self) -> String {
        match (self.letter, self.digit) {
            (Some(l), _) => l.to_string(),
            (None, Some(d)) => d.to_string(),
            (None, None) => unreachable!("a parsed answer always carries a value"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseError {
    #[error("reply contains no usable answer")]
    Unparseable,
    #[error("reply is a number outside 1..=5")]
    OutOfRange,
    #[error("reply contains more than one candidate answer")]
    Ambiguous,
}

/// Splits on anything that is not alphanumeric.
fn tokens(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty())
}

/// Parses an A-E reply.
///
/// Exact path: trim, strip one trailing `.` or `)`, uppercase, accept a single
/// A-E character. Fallback: exactly one standalone upper-case A-E token.
pub fn parse_letter(raw: &str) -> Result<ParsedAnswer, ParseError> {
    let mut rules = Vec::new();
    let trimmed = raw.trim();
    if trimmed.len() != raw.len() {
        rules.push(NormalizationRule::Trim);
    }
    let stripped = match trimmed.strip_suffix(['.', ')']) {
        Some(s) => {
            rules.push(NormalizationRule::StripPunct);
            s
        }
        None => trimmed,
    };
    let mut chars = stripped.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        let upper = c.to_ascii_uppercase();
        if upper != c {
            rules.push(NormalizationRule::Uppercase);
        }
        if let Some(l) = Letter::from_char(upper) {
            return Ok(ParsedAnswer::letter(l, rules));
        }
    }

    // Lower-case single letters are not considered here: "a" is usually the article.
    let mut found: Option<Letter> = None;
    for tok in tokens(raw) {
        let mut cs = tok.chars();
        if let (Some(c), None) = (cs.next(), cs.next()) {
            if let Some(l) = Letter::from_char(c) {
                match found {
                    Some(prev) if prev != l => return Err(ParseError::Ambiguous),
                    _ => found = Some(l),
                }
            }
        }
    }
    match found {
        Some(l) => Ok(ParsedAnswer::letter(l, vec![NormalizationRule::FallbackToken])),
        None => Err(ParseError::Unparseable),
    }
}

/// Parses a 1-5 intensity reply. Out-of-range integers are errors, never clamped.
pub fn parse_intensity(raw: &str) -> Result<ParsedAnswer, ParseError> {
    let trimmed = raw.trim();
    let rules = if trimmed.len() != raw.len() { vec![NormalizationRule::Trim] } else { Vec::new() };
    if !trimmed.is_empty() && trimmed.chars().all(|c| c.is_ascii_digit()) {
        return match trimmed.parse::<u64>() {
            Ok(v @ 1..=5) if trimmed.len() == 1 => Ok(ParsedAnswer::digit(v as u8, rules)),
            _ => Err(ParseError::OutOfRange),
        };
    }

    let numbers: Vec<&str> = tokens(raw)
        .filter(|t| t.chars().all(|c| c.is_ascii_digit()))
        .collect();
    let mut distinct: Vec<&str> = numbers.clone();
    distinct.sort_unstable();
    distinct.dedup();
    match distinct.as_slice() {
        [] => Err(ParseError::Unparseable),
        [one] => match one.parse::<u64>() {
            Ok(v @ 1..=5) if one.len() == 1 => {
                Ok(ParsedAnswer::digit(v as u8, vec![NormalizationRule::FallbackToken]))
            }
            _ => Err(ParseError::OutOfRange),
        },
        _ => Err(ParseError::Ambiguous),
    }
}

pub fn parse_for(space: AnswerSpace, raw: &str) -> Result<ParsedAnswer, ParseError> {
    match space {
        AnswerSpace::LetterAE => parse_letter(raw),
        AnswerSpace::Digit15 => parse_intensity(raw),
    }
}
