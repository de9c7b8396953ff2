//! The persisted outcome of one prompt job.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bank::FactorId;
use crate::parse::{NormalizationRule, ParseError, ParsedAnswer};
use crate::prompt::{Condition, ConditionKind, PromptJob};
use crate::scoring::Letter;
use crate::traits::TraitId;

/// Why a record carries no usable answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordError {
    Unparseable,
    OutOfRange,
    Ambiguous,
    RequestFailed,
}

impl From<ParseError> for RecordError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::Unparseable => RecordError::Unparseable,
            ParseError::OutOfRange => RecordError::OutOfRange,
            ParseError::Ambiguous => RecordError::Ambiguous,
        }
    }
}

/// One line of the records log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub job_id: String,
    pub kind: ConditionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub induced_trait: Option<TraitId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    pub observed_trait: TraitId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_index: Option<u8>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub repeat: u32,
    /// Hex SHA-256 of the prompt text.
    pub prompt_digest: String,
    /// Model reply exactly as received; absent when every attempt failed.
    pub raw_text: Option<String>,
    /// Canonical answer (`"A"`..`"E"` or `"1"`..`"5"`) when parsing succeeded.
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normalization: Vec<NormalizationRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reasked: bool,
    /// The ambiguous first reply when a re-ask happened; `raw_text` then holds the second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_raw_text: Option<String>,
    pub backend_tag: String,
    #[serde(default)]
    pub from_cache: bool,
    pub latency_ms: u64,
    pub timestamp: String,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

pub fn prompt_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ResponseRecord {
    /// A record with the job's coordinates filled in and no outcome yet.
    pub fn for_job(job: &PromptJob) -> Self {
        ResponseRecord {
            job_id: job.job_id.clone(),
            kind: job.condition.kind,
            induced_trait: job.condition.induced_trait,
            level: job.condition.level,
            observed_trait: job.observed_trait,
            item_id: job.item_id.clone(),
            factor: job.factor,
            question_index: job.question_index,
            repeat: job.repeat,
            prompt_digest: prompt_digest(&job.prompt_text),
            raw_text: None,
            answer: None,
            normalization: Vec::new(),
            error: None,
            error_detail: None,
            attempt_count: 0,
            reasked: false,
            first_raw_text: None,
            backend_tag: String::new(),
            from_cache: false,
            latency_ms: 0,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }

    pub fn set_parsed(&mut self, parsed: &ParsedAnswer) {
        self.answer = Some(parsed.canonical());
        self.normalization = parsed.normalization_applied.clone();
        self.error = None;
        self.error_detail = None;
    }

    pub fn condition(&self) -> Condition {
        Condition { kind: self.kind, induced_trait: self.induced_trait, level: self.level }
    }

    pub fn is_success(&self) -> bool {
        self.answer.is_some()
    }

    pub fn letter(&self) -> Option<Letter> {
        self.answer.as_deref().and_then(|a| a.parse().ok())
    }

    pub fn digit(&self) -> Option<u8> {
        self.answer
            .as_deref()
            .and_then(|a| a.parse::<u8>().ok())
            .filter(|d| (1..=5).contains(d))
    }
}
