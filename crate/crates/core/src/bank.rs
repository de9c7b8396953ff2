//! The item bank: keyed inventory items, intensity factors, behavioral
//! questions, adjective anchors and per-trait descriptions.
//!
//! A bank is loaded from a single JSON document, validated in full, and is
//! immutable afterwards. Its digest is the SHA-256 of the canonical compact
//! serialization, so two banks with identical content always share a digest
//! regardless of whitespace in the source file.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::traits::TraitId;

/// The reference bank shipped with the crate.
pub const REFERENCE_BANK_JSON: &str = include_str!("../data/reference_bank.json");

pub const FACTORS_PER_BANK: usize = 5;
pub const QUESTIONS_PER_TRAIT: usize = 3;
pub const SCALE_POINTS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum BankError {
    #[error("cannot read bank file: {0}")]
    Io(#[from] std::io::Error),
    #[error("bank document is not valid JSON for the bank schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid bank: {0}")]
    Invalid(String),
}

/// Scoring direction of an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn token(self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "−",
        }
    }

    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Polarity::Positive),
            // U+2212 is canonical; ASCII hyphen is accepted on input.
            "−" | "-" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity key `{other}`, expected \"+\" or \"−\"")),
        }
    }
}

impl Serialize for Polarity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for Polarity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub stem: String,
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub key: Polarity,
}

/// The five behavioral dimensions along which intensity is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FactorId {
    Frequency,
    Depth,
    Threshold,
    Effort,
    Willingness,
}

impl FactorId {
    pub const ALL: [FactorId; 5] = [
        FactorId::Frequency,
        FactorId::Depth,
        FactorId::Threshold,
        FactorId::Effort,
        FactorId::Willingness,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FactorId::Frequency => "FREQUENCY",
            FactorId::Depth => "DEPTH",
            FactorId::Threshold => "THRESHOLD",
            FactorId::Effort => "EFFORT",
            FactorId::Willingness => "WILLINGNESS",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FactorId::Frequency => "Frequency",
            FactorId::Depth => "Depth",
            FactorId::Threshold => "Threshold",
            FactorId::Effort => "Effort",
            FactorId::Willingness => "Willingness",
        }
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntensityFactor {
    pub id: FactorId,
    /// Leading interrogative, e.g. "How often do you".
    pub question_phrase: String,
    /// Descriptors for scale points 1 through 5, in order.
    pub answer_descriptors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehavioralQuestion {
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub action_phrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjectiveAnchors {
    pub trait_id: TraitId,
    /// Index 0 holds level 1.
    pub by_level: [Vec<String>; 5],
}

impl AdjectiveAnchors {
    pub fn level(&self, level: u8) -> Option<&[String]> {
        match level {
            1..=5 => Some(&self.by_level[usize::from(level) - 1]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitMeta {
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub definition: String,
    pub p2_description: String,
}

// On-disk document shapes. Field order here fixes the canonical serialization.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankDocument {
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_items: Option<usize>,
    items: Vec<ItemDoc>,
    factors: Vec<IntensityFactor>,
    behavioral_questions: Vec<BehavioralQuestion>,
    anchors: Vec<AnchorDoc>,
    meta: Vec<TraitMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemDoc {
    id: String,
    stem: String,
    #[serde(rename = "trait")]
    trait_id: TraitId,
    key: Polarity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorDoc {
    #[serde(rename = "trait")]
    trait_id: TraitId,
    levels: BTreeMap<String, Vec<String>>,
}

/// A fully validated item bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemBank {
    pub version: String,
    pub total_items: Option<usize>,
    pub items: Vec<Item>,
    pub factors: Vec<IntensityFactor>,
    pub behavioral_questions: Vec<BehavioralQuestion>,
    pub anchors: Vec<AdjectiveAnchors>,
    pub meta: Vec<TraitMeta>,
    digest: String,
}

/// Reads, parses and validates a bank document.
pub fn load_bank(path: impl AsRef<Path>) -> Result<ItemBank, BankError> {
    let text = std::fs::read_to_string(path)?;
    ItemBank::from_json_str(&text)
}

impl ItemBank {
    pub fn from_json_str(text: &str) -> Result<ItemBank, BankError> {
        let doc: BankDocument = serde_json::from_str(text)?;
        ItemBank::from_document(doc)
    }

    /// The bank shipped in `data/reference_bank.json`.
    pub fn reference() -> ItemBank {
        ItemBank::from_json_str(REFERENCE_BANK_JSON).expect("reference bank is valid")
    }

    fn from_document(doc: BankDocument) -> Result<ItemBank, BankError> {
        let items: Vec<Item> = doc
            .items
            .iter()
            .map(|d| Item {
                id: d.id.clone(),
                stem: d.stem.clone(),
                trait_id: d.trait_id,
                key: d.key,
            })
            .collect();
        let mut anchors = Vec::with_capacity(doc.anchors.len());
        for a in &doc.anchors {
            anchors.push(anchor_from_doc(a)?);
        }
        let mut bank = ItemBank {
            version: doc.version,
            total_items: doc.total_items,
            items,
            factors: doc.factors,
            behavioral_questions: doc.behavioral_questions,
            anchors,
            meta: doc.meta,
            digest: String::new(),
        };
        bank.validate()?;
        bank.digest = hex::encode(Sha256::digest(bank.canonical_json().as_bytes()));
        Ok(bank)
    }

    fn validate(&self) -> Result<(), BankError> {
        let invalid = |msg: String| Err(BankError::Invalid(msg));

        if self.version.trim().is_empty() {
            return invalid("version is empty".into());
        }

        let mut ids = HashSet::new();
        for item in &self.items {
            if item.id.trim().is_empty() {
                return invalid("item with empty id".into());
            }
            if !ids.insert(item.id.as_str()) {
                return invalid(format!("duplicate item id `{}`", item.id));
            }
            if item.stem.trim().is_empty() {
                return invalid(format!("item `{}` has an empty stem", item.id));
            }
        }
        for t in TraitId::ALL {
            let n = self.items.iter().filter(|i| i.trait_id == t).count();
            if n == 0 {
                return invalid(format!("trait {t} has 0 items; N_d ≥ 1 violated"));
            }
        }
        if let Some(total) = self.total_items {
            if total != self.items.len() {
                return invalid(format!(
                    "bank declares {total} items but contains {}",
                    self.items.len()
                ));
            }
        }

        if self.factors.len() != FACTORS_PER_BANK {
            return invalid(format!(
                "bank has {} intensity factors, expected {FACTORS_PER_BANK}",
                self.factors.len()
            ));
        }
        for id in FactorId::ALL {
            let n = self.factors.iter().filter(|f| f.id == id).count();
            if n != 1 {
                return invalid(format!("intensity factor {id} appears {n} times, expected 1"));
            }
        }
        for f in &self.factors {
            if f.question_phrase.trim().is_empty() {
                return invalid(format!("intensity factor {} has an empty question phrase", f.id));
            }
            if f.answer_descriptors.len() != SCALE_POINTS {
                return invalid(format!(
                    "intensity factor {} has {} answer descriptors, expected {SCALE_POINTS}",
                    f.id,
                    f.answer_descriptors.len()
                ));
            }
            if f.answer_descriptors.iter().any(|d| d.trim().is_empty()) {
                return invalid(format!("intensity factor {} has an empty answer descriptor", f.id));
            }
        }

        for t in TraitId::ALL {
            let qs: Vec<_> = self.questions_for(t).collect();
            if qs.len() != QUESTIONS_PER_TRAIT {
                return invalid(format!(
                    "trait {t} has {} behavioral questions, expected {QUESTIONS_PER_TRAIT}",
                    qs.len()
                ));
            }
            if qs.iter().any(|q| q.action_phrase.trim().is_empty()) {
                return invalid(format!("trait {t} has an empty behavioral question"));
            }

            let n_anchor = self.anchors.iter().filter(|a| a.trait_id == t).count();
            if n_anchor != 1 {
                return invalid(format!("trait {t} has {n_anchor} anchor sets, expected 1"));
            }

            let n_meta = self.meta.iter().filter(|m| m.trait_id == t).count();
            if n_meta != 1 {
                return invalid(format!("trait {t} has {n_meta} meta entries, expected 1"));
            }
            let meta = self.meta_for(t);
            if meta.definition.trim().is_empty() {
                return invalid(format!("trait {t} has an empty definition"));
            }
            if meta.p2_description.trim().is_empty() {
                return invalid(format!("trait {t} has an empty P2 description"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Compact JSON with fixed field order; the digest is computed over this.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("bank serializes")
    }

    /// Pretty-printed canonical form, suitable for writing back to disk.
    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("bank serializes");
        s.push('\n');
        s
    }

    fn to_document(&self) -> BankDocument {
        BankDocument {
            version: self.version.clone(),
            total_items: self.total_items,
            items: self
                .items
                .iter()
                .map(|i| ItemDoc {
                    id: i.id.clone(),
                    stem: i.stem.clone(),
                    trait_id: i.trait_id,
                    key: i.key,
                })
                .collect(),
            factors: self.factors.clone(),
            behavioral_questions: self.behavioral_questions.clone(),
            anchors: self
                .anchors
                .iter()
                .map(|a| AnchorDoc {
                    trait_id: a.trait_id,
                    levels: a
                        .by_level
                        .iter()
                        .enumerate()
                        .map(|(i, adj)| ((i + 1).to_string(), adj.clone()))
                        .collect(),
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// All items keyed to `trait_id`, in bank order.
    pub fn items_for_trait(&self, trait_id: TraitId) -> Vec<&Item> {
        self.items.iter().filter(|i| i.trait_id == trait_id).collect()
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn factor(&self, id: FactorId) -> &IntensityFactor {
        self.factors
            .iter()
            .find(|f| f.id == id)
            .expect("validated bank has every factor")
    }

    pub fn questions_for(&self, trait_id: TraitId) -> impl Iterator<Item = &BehavioralQuestion> {
        self.behavioral_questions
            .iter()
            .filter(move |q| q.trait_id == trait_id)
    }

    pub fn question(&self, trait_id: TraitId, index: usize) -> Option<&BehavioralQuestion> {
        self.questions_for(trait_id).nth(index)
    }

    pub fn anchors_for(&self, trait_id: TraitId) -> &AdjectiveAnchors {
        self.anchors
            .iter()
            .find(|a| a.trait_id == trait_id)
            .expect("validated bank has anchors for every trait")
    }

    pub fn meta_for(&self, trait_id: TraitId) -> &TraitMeta {
        self.meta
            .iter()
            .find(|m| m.trait_id == trait_id)
            .expect("validated bank has meta for every trait")
    }
}

fn anchor_from_doc(doc: &AnchorDoc) -> Result<AdjectiveAnchors, BankError> {
    let t = doc.trait_id;
    if let Some(bad) = doc.levels.keys().find(|k| !matches!(k.as_str(), "1" | "2" | "3" | "4" | "5")) {
        return Err(BankError::Invalid(format!(
            "anchors for {t} contain unknown level `{bad}`"
        )));
    }
    let mut by_level: [Vec<String>; 5] = Default::default();
    for (level, slot) in by_level.iter_mut().enumerate() {
        let key = (level + 1).to_string();
        let adjectives = doc.levels.get(&key).ok_or_else(|| {
            BankError::Invalid(format!("anchors for {t} are missing level {key}"))
        })?;
        if adjectives.is_empty() || adjectives.iter().any(|a| a.trim().is_empty()) {
            return Err(BankError::Invalid(format!(
                "anchors for {t} level {key} must be a non-empty list of non-empty adjectives"
            )));
        }
        *slot = adjectives.clone();
    }
    Ok(AdjectiveAnchors { trait_id: t, by_level })
}
