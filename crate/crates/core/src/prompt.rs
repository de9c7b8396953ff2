//! Prompt assembly for the four evaluation conditions and plan enumeration.
//!
//! Every builder is a pure function of its inputs. Rendered text has LF line
//! endings and no trailing newline.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bank::{AdjectiveAnchors, BehavioralQuestion, FactorId, IntensityFactor, Item, ItemBank, TraitMeta};
use crate::traits::TraitId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("behavioral question belongs to {question}, expected {expected}")]
    QuestionTraitMismatch { expected: TraitId, question: TraitId },
    #[error("anchors belong to {anchors}, expected {expected}")]
    AnchorTraitMismatch { expected: TraitId, anchors: TraitId },
    #[error("definition belongs to {meta}, expected {expected}")]
    MetaTraitMismatch { expected: TraitId, meta: TraitId },
    #[error("intensity level {0} outside 1..=5")]
    LevelOutOfRange(u8),
    #[error("intensity factor must have exactly 5 answer descriptors")]
    BadFactor,
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("target set is empty")]
    EmptyTargetSet,
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
}

/// The Fig.-1 style inventory prompt with `stem` filled in.
pub fn build_mpi_prompt(item: &Item) -> String {
    format!(
        "Question:\n\
         \n\
         Given a statement of you: \"You {stem}.\"\n\
         \n\
         Please choose from the following options to identify how accurately this statement describes you.\n\
         \n\
         Options:\n\
         A. Very Accurate\n\
         B. Moderately Accurate\n\
         C. Neither Accurate Nor Inaccurate\n\
         D. Moderately Inaccurate\n\
         E. Very Inaccurate\n\
         \n\
         Only answer using the letter of the option. Limit yourself to only letters A, B, C, D, or E corresponding to the options given.",
        stem = item.stem
    )
}

/// Inventory prompt preceded by the trait's induction monologue and one blank line.
pub fn build_p2_prompt(meta: &TraitMeta, item: &Item) -> String {
    format!("{}\n\n{}", meta.p2_description, build_mpi_prompt(item))
}

const INTENSITY_PREAMBLE: &str = "Personality intensity is defined as a combination of five factors: frequency, depth, threshold, effort, and willingness, each rated on a scale from 1 to 5.";

fn composite_question(factor: &IntensityFactor, q: &BehavioralQuestion) -> String {
    format!("{} {}?", factor.question_phrase, q.action_phrase)
}

fn scale_lines(descriptors: &[String]) -> String {
    descriptors
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}: {}", i + 1, d))
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_factor(factor: &IntensityFactor) -> Result<(), PromptError> {
    if factor.answer_descriptors.len() == 5 {
        Ok(())
    } else {
        Err(PromptError::BadFactor)
    }
}

/// Neutral intensity-profiling prompt for one trait, factor and behavioral question.
pub fn build_sac_neutral_prompt(
    trait_id: TraitId,
    meta: &TraitMeta,
    factor: &IntensityFactor,
    q: &BehavioralQuestion,
) -> Result<String, PromptError> {
    if q.trait_id != trait_id {
        return Err(PromptError::QuestionTraitMismatch { expected: trait_id, question: q.trait_id });
    }
    if meta.trait_id != trait_id {
        return Err(PromptError::MetaTraitMismatch { expected: trait_id, meta: meta.trait_id });
    }
    check_factor(factor)?;
    let name = trait_id.display_name();
    Ok(format!(
        "{INTENSITY_PREAMBLE}\n\
         \n\
         The target trait is {name}, defined as: {definition}.\n\
         \n\
         For the trait {name} with the intensity factor {factor_name}, please answer the following question:\n\
         \n\
         {question}\n\
         \n\
         The possible response scale is as follows:\n\
         {scale}\n\
         \n\
         For each question, please provide a number between 1 and 5 that best represents the intensity.",
        definition = meta.definition,
        factor_name = factor.id.display_name(),
        question = composite_question(factor, q),
        scale = scale_lines(&factor.answer_descriptors),
    ))
}

/// Graded-induction prompt: `target` is set to `level` and the model is asked
/// about `observed` through one factor and behavioral question.
///
/// The closing sentence carries no terminal punctuation, as in the source template.
pub fn build_sac_induced_prompt(
    target: TraitId,
    level: u8,
    anchors: &AdjectiveAnchors,
    observed: TraitId,
    factor: &IntensityFactor,
    q: &BehavioralQuestion,
    meta_target: &TraitMeta,
) -> Result<String, PromptError> {
    if !(1..=5).contains(&level) {
        return Err(PromptError::LevelOutOfRange(level));
    }
    if anchors.trait_id != target {
        return Err(PromptError::AnchorTraitMismatch { expected: target, anchors: anchors.trait_id });
    }
    if q.trait_id != observed {
        return Err(PromptError::QuestionTraitMismatch { expected: observed, question: q.trait_id });
    }
    if meta_target.trait_id != target {
        return Err(PromptError::MetaTraitMismatch { expected: target, meta: meta_target.trait_id });
    }
    check_factor(factor)?;
    let target_name = target.display_name();
    let observed_name = observed.display_name();
    let adjective_lines = anchors
        .by_level
        .iter()
        .enumerate()
        .map(|(i, adj)| format!("{}: {}", i + 1, adj.join(", ")))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(format!(
        "{INTENSITY_PREAMBLE}\n\
         \n\
         The trait {target_name} would be described as: {definition}.\n\
         \n\
         The trait currently being adjusted is {target_name}, which is set to intensity level {level}. This adjustment to {target_name} may affect other traits differently, depending on their nature.\n\
         \n\
         Adjectives for each scale from 1 to 5 for the trait {target_name} are:\n\
         {adjective_lines}\n\
         \n\
         The intensity for the trait {observed_name} should reflect how it behaves independently or in contrast with the modified intensity of {target_name}.\n\
         \n\
         For all future communication, the scale I would like you to operate on for {target_name} is {level}.\n\
         \n\
         Task:\n\
         {question}\n\
         \n\
         The possible intensity scale is as follows:\n\
         {scale}\n\
         \n\
         For each question, please provide an answer that best represents the trait {observed_name} at the intensity of {target_name}",
        definition = meta_target.definition,
        question = composite_question(factor, q),
        scale = scale_lines(&factor.answer_descriptors),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionKind {
    MpiNeutral,
    P2Induced,
    SacNeutral,
    SacInduced,
}

impl ConditionKind {
    pub fn code(self) -> &'static str {
        match self {
            ConditionKind::MpiNeutral => "MPI_NEUTRAL",
            ConditionKind::P2Induced => "P2_INDUCED",
            ConditionKind::SacNeutral => "SAC_NEUTRAL",
            ConditionKind::SacInduced => "SAC_INDUCED",
        }
    }

    pub fn answer_space(self) -> AnswerSpace {
        match self {
            ConditionKind::MpiNeutral | ConditionKind::P2Induced => AnswerSpace::LetterAE,
            ConditionKind::SacNeutral | ConditionKind::SacInduced => AnswerSpace::Digit15,
        }
    }

    pub fn is_induced(self) -> bool {
        matches!(self, ConditionKind::P2Induced | ConditionKind::SacInduced)
    }

    /// The neutral baseline this kind is compared against.
    pub fn neutral_baseline(self) -> ConditionKind {
        match self {
            ConditionKind::MpiNeutral | ConditionKind::P2Induced => ConditionKind::MpiNeutral,
            ConditionKind::SacNeutral | ConditionKind::SacInduced => ConditionKind::SacNeutral,
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnswerSpace {
    #[serde(rename = "LETTER_A_E")]
    LetterAE,
    #[serde(rename = "DIGIT_1_5")]
    Digit15,
}

/// An experimental condition. Construct through the checked constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub kind: ConditionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub induced_trait: Option<TraitId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
}

impl Condition {
    pub fn mpi_neutral() -> Self {
        Condition { kind: ConditionKind::MpiNeutral, induced_trait: None, level: None }
    }

    pub fn sac_neutral() -> Self {
        Condition { kind: ConditionKind::SacNeutral, induced_trait: None, level: None }
    }

    pub fn p2_induced(target: TraitId) -> Self {
        Condition { kind: ConditionKind::P2Induced, induced_trait: Some(target), level: None }
    }

    pub fn sac_induced(target: TraitId, level: u8) -> Result<Self, PromptError> {
        if !(1..=5).contains(&level) {
            return Err(PromptError::LevelOutOfRange(level));
        }
        Ok(Condition { kind: ConditionKind::SacInduced, induced_trait: Some(target), level: Some(level) })
    }

    /// Checks the presence rules for `induced_trait` and `level`.
    pub fn validate(&self) -> Result<(), PromptError> {
        let needs_trait = self.kind.is_induced();
        let needs_level = self.kind == ConditionKind::SacInduced;
        if needs_trait != self.induced_trait.is_some() {
            return Err(PromptError::InvalidCondition(format!(
                "{} {} an induced trait",
                self.kind,
                if needs_trait { "requires" } else { "must not carry" }
            )));
        }
        if needs_level != self.level.is_some() {
            return Err(PromptError::InvalidCondition(format!(
                "{} {} a level",
                self.kind,
                if needs_level { "requires" } else { "must not carry" }
            )));
        }
        if let Some(l) = self.level {
            if !(1..=5).contains(&l) {
                return Err(PromptError::LevelOutOfRange(l));
            }
        }
        Ok(())
    }

    /// Short label such as `SAC_INDUCED/WARMTH/L5`.
    pub fn label(&self) -> String {
        let mut s = self.kind.code().to_string();
        if let Some(t) = self.induced_trait {
            s.push('/');
            s.push_str(t.code());
        }
        if let Some(l) = self.level {
            s.push_str(&format!("/L{l}"));
        }
        s
    }
}

/// One generated prompt with its full provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptJob {
    pub job_id: String,
    pub condition: Condition,
    pub observed_trait: TraitId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_index: Option<u8>,
    /// Repeat index for multi-sample runs; 0 for the single-shot default.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub repeat: u32,
    pub prompt_text: String,
    pub expected_answer_space: AnswerSpace,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

/// Deterministic job identifier over the bank digest and every job coordinate.
pub fn job_id(
    bank_digest: &str,
    condition: &Condition,
    observed: TraitId,
    item_id: Option<&str>,
    factor: Option<FactorId>,
    question_index: Option<u8>,
    repeat: u32,
) -> String {
    let mut h = Sha256::new();
    let fields = [
        bank_digest.to_string(),
        condition.kind.code().to_string(),
        condition.induced_trait.map(|t| t.code()).unwrap_or("-").to_string(),
        condition.level.map(|l| l.to_string()).unwrap_or_else(|| "-".into()),
        observed.code().to_string(),
        item_id.unwrap_or("-").to_string(),
        factor.map(|f| f.code()).unwrap_or("-").to_string(),
        question_index.map(|q| q.to_string()).unwrap_or_else(|| "-".into()),
        repeat.to_string(),
    ];
    for f in &fields {
        // length-prefixed so field boundaries cannot be forged
        h.update((f.len() as u64).to_le_bytes());
        h.update(f.as_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

/// Which grid to enumerate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub kind: ConditionKind,
    /// Induction targets; ignored for neutral kinds. Defaults to all traits.
    #[serde(default = "all_traits")]
    pub targets: Vec<TraitId>,
    /// SAC levels; only used for `SacInduced`.
    #[serde(default = "default_levels")]
    pub levels: Vec<u8>,
    #[serde(default = "one")]
    pub repeats: u32,
}

fn all_traits() -> Vec<TraitId> {
    TraitId::ALL.to_vec()
}

pub fn default_levels() -> Vec<u8> {
    vec![1, 3, 5]
}

fn one() -> u32 {
    1
}

impl PlanOptions {
    pub fn new(kind: ConditionKind) -> Self {
        PlanOptions { kind, targets: all_traits(), levels: default_levels(), repeats: 1 }
    }

    pub fn with_targets(mut self, targets: Vec<TraitId>) -> Self {
        self.targets = targets;
        self
    }

    pub fn with_levels(mut self, levels: Vec<u8>) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_repeats(mut self, repeats: u32) -> Self {
        self.repeats = repeats;
        self
    }

    /// Targets in canonical order without duplicates.
    fn canonical_targets(&self) -> Result<Vec<TraitId>, PromptError> {
        let mut t = self.targets.clone();
        t.sort();
        t.dedup();
        if t.is_empty() {
            return Err(PromptError::EmptyTargetSet);
        }
        Ok(t)
    }

    fn canonical_levels(&self) -> Result<Vec<u8>, PromptError> {
        let mut l = self.levels.clone();
        l.sort();
        l.dedup();
        if l.is_empty() {
            return Err(PromptError::EmptyLevelSet);
        }
        if let Some(bad) = l.iter().find(|x| !(1..=5).contains(*x)) {
            return Err(PromptError::LevelOutOfRange(*bad));
        }
        Ok(l)
    }

    /// The conditions this plan covers, in enumeration order.
    pub fn conditions(&self) -> Result<Vec<Condition>, PromptError> {
        Ok(match self.kind {
            ConditionKind::MpiNeutral => vec![Condition::mpi_neutral()],
            ConditionKind::SacNeutral => vec![Condition::sac_neutral()],
            ConditionKind::P2Induced => self
                .canonical_targets()?
                .into_iter()
                .map(Condition::p2_induced)
                .collect(),
            ConditionKind::SacInduced => {
                let levels = self.canonical_levels()?;
                let mut out = Vec::new();
                for t in self.canonical_targets()? {
                    for &l in &levels {
                        out.push(Condition::sac_induced(t, l)?);
                    }
                }
                out
            }
        })
    }
}

/// Enumerates every job for `options` in canonical order:
/// target, level, observed trait, then item (bank order) or factor and
/// question index, then repeat.
pub fn enumerate_plan(bank: &ItemBank, options: &PlanOptions) -> Result<Vec<PromptJob>, PromptError> {
    let conditions = options.conditions()?;
    let repeats = options.repeats.max(1);
    let digest = bank.digest();
    let mut jobs = Vec::new();

    for condition in conditions {
        match condition.kind {
            ConditionKind::MpiNeutral | ConditionKind::P2Induced => {
                for observed in TraitId::ALL {
                    for item in bank.items_for_trait(observed) {
                        let text = match condition.induced_trait {
                            Some(target) => build_p2_prompt(bank.meta_for(target), item),
                            None => build_mpi_prompt(item),
                        };
                        for r in 0..repeats {
                            jobs.push(PromptJob {
                                job_id: job_id(digest, &condition, observed, Some(&item.id), None, None, r),
                                condition,
                                observed_trait: observed,
                                item_id: Some(item.id.clone()),
                                factor: None,
                                question_index: None,
                                repeat: r,
                                prompt_text: text.clone(),
                                expected_answer_space: AnswerSpace::LetterAE,
                            });
                        }
                    }
                }
            }
            ConditionKind::SacNeutral | ConditionKind::SacInduced => {
                for observed in TraitId::ALL {
                    for factor_id in FactorId::ALL {
                        let factor = bank.factor(factor_id);
                        for (qi, q) in bank.questions_for(observed).enumerate() {
                            let text = match (condition.induced_trait, condition.level) {
                                (Some(target), Some(level)) => build_sac_induced_prompt(
                                    target,
                                    level,
                                    bank.anchors_for(target),
                                    observed,
                                    factor,
                                    q,
                                    bank.meta_for(target),
                                )?,
                                _ => build_sac_neutral_prompt(observed, bank.meta_for(observed), factor, q)?,
                            };
                            let qi = qi as u8;
                            for r in 0..repeats {
                                jobs.push(PromptJob {
                                    job_id: job_id(digest, &condition, observed, None, Some(factor_id), Some(qi), r),
                                    condition,
                                    observed_trait: observed,
                                    item_id: None,
                                    factor: Some(factor_id),
                                    question_index: Some(qi),
                                    repeat: r,
                                    prompt_text: text.clone(),
                                    expected_answer_space: AnswerSpace::Digit15,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Writes one JSON object per job, LF-terminated.
pub fn write_plan_jsonl<W: Write>(jobs: &[PromptJob], mut out: W) -> std::io::Result<()> {
    for job in jobs {
        serde_json::to_writer(&mut out, job)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::bank::Polarity;

    fn item(stem: &str) -> Item {
        Item { id: "X1".into(), stem: stem.into(), trait_id: TraitId::Warmth, key: Polarity::Positive }
    }

    #[test]
    fn mpi_prompt_quotes_the_statement() {
        let text = build_mpi_prompt(&item("enjoy bringing people together"));
        assert!(text.contains("Given a statement of you: \"You enjoy bringing people together.\"\n"));
        assert!(text.contains("A. Very Accurate\n"));
        assert!(text.contains("E. Very Inaccurate\n"));
        assert!(!text.ends_with('\n'));

        let other = build_mpi_prompt(&item("know how to comfort others"));
        assert_eq!(
            text.replace("enjoy bringing people together", "know how to comfort others"),
            other
        );
        assert_eq!(other, build_mpi_prompt(&item("know how to comfort others")));
    }

    #[test]
    fn p2_prompt_is_prefix_plus_blank_line() {
        let bank = ItemBank::reference();
        let meta = bank.meta_for(TraitId::Complexity);
        let it = &bank.items[0];
        let text = build_p2_prompt(meta, it);
        assert!(text.starts_with("You have a complex and nuanced understanding of the world."));
        let prefix = format!("{}\n\n", meta.p2_description);
        assert_eq!(text.strip_prefix(&prefix).unwrap(), build_mpi_prompt(it));
    }

    #[test]
    fn sac_neutral_composite_question_and_scale() {
        let bank = ItemBank::reference();
        let q = bank.question(TraitId::Warmth, 0).unwrap();
        assert_eq!(q.action_phrase, "cheer people up");
        let text = build_sac_neutral_prompt(
            TraitId::Warmth,
            bank.meta_for(TraitId::Warmth),
            bank.factor(FactorId::Frequency),
            q,
        )
        .unwrap();
        assert!(text.contains("\nHow often do you cheer people up?\n"));
        assert!(text.contains("1: Never\n2: Seldom\n3: Occasionally\n4: Often\n5: All the time\n"));
        assert!(text.contains("with the intensity factor Frequency,"));
    }

    #[test]
    fn sac_neutral_rejects_mismatched_question() {
        let bank = ItemBank::reference();
        let q = bank.question(TraitId::Anxiety, 0).unwrap();
        let err = build_sac_neutral_prompt(
            TraitId::Warmth,
            bank.meta_for(TraitId::Warmth),
            bank.factor(FactorId::Depth),
            q,
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::QuestionTraitMismatch { .. }));
    }

    fn induced(target: TraitId, level: u8, observed: TraitId) -> Result<String, PromptError> {
        let bank = ItemBank::reference();
        build_sac_induced_prompt(
            target,
            level,
            bank.anchors_for(target),
            observed,
            bank.factor(FactorId::Frequency),
            bank.question(observed, 0).unwrap(),
            bank.meta_for(target),
        )
    }

    #[test]
    fn sac_induced_adjective_lines() {
        let text = induced(TraitId::Warmth, 5, TraitId::Warmth).unwrap();
        assert!(text.contains("\n5: extremely warm, deeply empathetic, overwhelmingly supportive\n"));
        assert!(text.contains("\n3: friendly, attentive, genuinely supportive\n"));
        assert!(text.contains("\n1: mildly warm, occasionally empathetic, reservedly caring\n"));
        assert!(text.contains("set to intensity level 5."));
        assert!(text.contains("Task:\nHow often do you cheer people up?\n"));
        assert!(text.ends_with("represents the trait Warmth at the intensity of Warmth"));
    }

    #[test]
    fn sac_induced_names_observed_trait() {
        let text = induced(TraitId::Warmth, 3, TraitId::Distrust).unwrap();
        assert!(text.contains("The intensity for the trait Distrust should reflect"));
        assert!(text.contains("The trait currently being adjusted is Warmth,"));
    }

    #[test]
    fn sac_induced_precondition_errors() {
        assert_eq!(
            induced(TraitId::Warmth, 6, TraitId::Warmth).unwrap_err(),
            PromptError::LevelOutOfRange(6)
        );
        assert_eq!(
            induced(TraitId::Warmth, 0, TraitId::Warmth).unwrap_err(),
            PromptError::LevelOutOfRange(0)
        );
        let bank = ItemBank::reference();
        let err = build_sac_induced_prompt(
            TraitId::Warmth,
            3,
            bank.anchors_for(TraitId::Anxiety),
            TraitId::Warmth,
            bank.factor(FactorId::Frequency),
            bank.question(TraitId::Warmth, 0).unwrap(),
            bank.meta_for(TraitId::Warmth),
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::AnchorTraitMismatch { .. }));
    }

    #[test]
    fn plan_cardinalities() {
        let bank = ItemBank::reference();
        let count = |o: PlanOptions| enumerate_plan(&bank, &o).unwrap().len();
        assert_eq!(count(PlanOptions::new(ConditionKind::MpiNeutral)), 163);
        assert_eq!(count(PlanOptions::new(ConditionKind::P2Induced)), 2608);
        assert_eq!(count(PlanOptions::new(ConditionKind::SacNeutral)), 240);
        assert_eq!(count(PlanOptions::new(ConditionKind::SacInduced)), 11_520);
        assert_eq!(
            count(PlanOptions::new(ConditionKind::SacInduced).with_levels(vec![1, 2, 3, 4, 5])),
            19_200
        );
        assert_eq!(
            count(PlanOptions::new(ConditionKind::SacInduced).with_targets(vec![TraitId::Warmth])),
            720
        );
        assert_eq!(count(PlanOptions::new(ConditionKind::MpiNeutral).with_repeats(3)), 489);
    }

    #[test]
    fn plan_errors() {
        let bank = ItemBank::reference();
        assert_eq!(
            enumerate_plan(&bank, &PlanOptions::new(ConditionKind::SacInduced).with_levels(vec![])).unwrap_err(),
            PromptError::EmptyLevelSet
        );
        assert_eq!(
            enumerate_plan(&bank, &PlanOptions::new(ConditionKind::P2Induced).with_targets(vec![])).unwrap_err(),
            PromptError::EmptyTargetSet
        );
        assert_eq!(
            enumerate_plan(&bank, &PlanOptions::new(ConditionKind::SacInduced).with_levels(vec![7])).unwrap_err(),
            PromptError::LevelOutOfRange(7)
        );
    }

    #[test]
    fn plans_are_deterministic_unique_and_correctly_typed() {
        let bank = ItemBank::reference();
        for kind in [
            ConditionKind::MpiNeutral,
            ConditionKind::P2Induced,
            ConditionKind::SacNeutral,
            ConditionKind::SacInduced,
        ] {
            let a = enumerate_plan(&bank, &PlanOptions::new(kind)).unwrap();
            let b = enumerate_plan(&bank, &PlanOptions::new(kind)).unwrap();
            assert_eq!(a, b);
            let ids: HashSet<_> = a.iter().map(|j| j.job_id.as_str()).collect();
            assert_eq!(ids.len(), a.len(), "{kind} has duplicate job ids");
            for j in &a {
                assert_eq!(j.expected_answer_space, kind.answer_space());
                j.condition.validate().unwrap();
            }
        }
    }

    #[test]
    fn target_order_is_canonicalized() {
        let bank = ItemBank::reference();
        let a = enumerate_plan(
            &bank,
            &PlanOptions::new(ConditionKind::P2Induced).with_targets(vec![TraitId::Anxiety, TraitId::Warmth]),
        )
        .unwrap();
        let b = enumerate_plan(
            &bank,
            &PlanOptions::new(ConditionKind::P2Induced)
                .with_targets(vec![TraitId::Warmth, TraitId::Anxiety, TraitId::Warmth]),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 163);
    }

    #[test]
    fn job_ids_depend_on_every_coordinate() {
        let c = Condition::sac_induced(TraitId::Warmth, 5).unwrap();
        let base = job_id("d", &c, TraitId::Anxiety, None, Some(FactorId::Depth), Some(1), 0);
        let variants = [
            job_id("e", &c, TraitId::Anxiety, None, Some(FactorId::Depth), Some(1), 0),
            job_id("d", &Condition::sac_induced(TraitId::Warmth, 3).unwrap(), TraitId::Anxiety, None, Some(FactorId::Depth), Some(1), 0),
            job_id("d", &c, TraitId::Reserve, None, Some(FactorId::Depth), Some(1), 0),
            job_id("d", &c, TraitId::Anxiety, None, Some(FactorId::Effort), Some(1), 0),
            job_id("d", &c, TraitId::Anxiety, None, Some(FactorId::Depth), Some(2), 0),
            job_id("d", &c, TraitId::Anxiety, None, Some(FactorId::Depth), Some(1), 1),
        ];
        for v in variants {
            assert_ne!(v, base);
        }
    }

    #[test]
    fn condition_validation() {
        assert!(Condition::sac_induced(TraitId::Warmth, 0).is_err());
        let bad = Condition { kind: ConditionKind::P2Induced, induced_trait: None, level: None };
        assert!(bad.validate().is_err());
        let bad = Condition { kind: ConditionKind::MpiNeutral, induced_trait: None, level: Some(3) };
        assert!(bad.validate().is_err());
        assert_eq!(
            Condition::sac_induced(TraitId::Reserve, 5).unwrap().label(),
            "SAC_INDUCED/RESERVE/L5"
        );
    }

    #[test]
    fn plan_jsonl_one_object_per_line() {
        let bank = ItemBank::reference();
        let jobs = enumerate_plan(&bank, &PlanOptions::new(ConditionKind::SacNeutral)).unwrap();
        let mut buf = Vec::new();
        write_plan_jsonl(&jobs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 240);
        let back: PromptJob = serde_json::from_str(lines[17]).unwrap();
        assert_eq!(back, jobs[17]);
    }
}
