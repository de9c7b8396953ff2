//! Keyed scoring of inventory answers and per-trait aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bank::Polarity;
use crate::prompt::Condition;
use crate::traits::TraitId;

/// An inventory answer option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
    E,
}

impl Letter {
    pub const ALL: [Letter; 5] = [Letter::A, Letter::B, Letter::C, Letter::D, Letter::E];

    pub fn from_char(c: char) -> Option<Letter> {
        match c {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            'E' => Some(Letter::E),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::A => 'A',
            Letter::B => 'B',
            Letter::C => 'C',
            Letter::D => 'D',
            Letter::E => 'E',
        }
    }

    /// A↔E, B↔D, C fixed.
    pub fn mirrored(self) -> Letter {
        Letter::ALL[4 - self as usize]
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Letter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Letter::from_char(c).ok_or_else(|| format!("not a letter A-E: {s}")),
            _ => Err(format!("not a letter A-E: {s}")),
        }
    }
}

/// Keyed score: positive items map A..E to 5..1, negative items to 1..5.
pub fn key_score(option: Letter, key: Polarity) -> u8 {
    let position = option as u8; // A = 0
    match key {
        Polarity::Positive => 5 - position,
        Polarity::Negative => position + 1,
    }
}

/// Letter whose keyed score equals `score` (1..=5).
pub fn letter_for_score(score: u8, key: Polarity) -> Option<Letter> {
    if !(1..=5).contains(&score) {
        return None;
    }
    let position = match key {
        Polarity::Positive => 5 - score,
        Polarity::Negative => score - 1,
    };
    Some(Letter::ALL[usize::from(position)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    #[default]
    Population,
    Sample,
}

impl FromStr for VarianceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "population" | "pop" => Ok(VarianceMode::Population),
            "sample" => Ok(VarianceMode::Sample),
            other => Err(format!("unknown variance mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("no scored responses for {0}")]
    NoData(TraitId),
    #[error("response value {0} outside 1..=5")]
    OutOfScale(u8),
    #[error("expected 15 SAC responses (5 factors x 3 questions), got {0}")]
    WrongSacShape(usize),
}

/// Mean and dispersion of the scored responses for one trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitScore {
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub mean: f64,
    pub variance_population: f64,
    /// `None` when fewer than two responses were scored.
    pub variance_sample: Option<f64>,
    pub n: usize,
    pub n_missing: usize,
}

impl TraitScore {
    /// Variance under `mode`; sample variance of a single response is reported as 0.
    pub fn variance(&self, mode: VarianceMode) -> f64 {
        match mode {
            VarianceMode::Population => self.variance_population,
            VarianceMode::Sample => self.variance_sample.unwrap_or(0.0),
        }
    }
}

/// Aggregates keyed scores for one trait. `None` entries are missing responses:
/// they are counted but never imputed.
pub fn trait_score(trait_id: TraitId, responses: &[Option<u8>]) -> Result<TraitScore, ScoreError> {
    let mut values = Vec::with_capacity(responses.len());
    for v in responses.iter().flatten() {
        if !(1..=5).contains(v) {
            return Err(ScoreError::OutOfScale(*v));
        }
        values.push(f64::from(*v));
    }
    let n = values.len();
    if n == 0 {
        return Err(ScoreError::NoData(trait_id));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(TraitScore {
        trait_id,
        mean,
        variance_population: ss / n as f64,
        variance_sample: (n >= 2).then(|| ss / (n - 1) as f64),
        n,
        n_missing: responses.len() - n,
    })
}

/// Intensity score over the 15 SAC responses (5 factors x 3 questions) of one trait.
pub fn sac_trait_score(trait_id: TraitId, responses: &[Option<u8>]) -> Result<TraitScore, ScoreError> {
    if responses.len() != 15 {
        return Err(ScoreError::WrongSacShape(responses.len()));
    }
    trait_score(trait_id, responses)
}

/// Per-trait scores of one model under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitProfile {
    pub model_id: String,
    pub condition: Condition,
    pub scores: BTreeMap<TraitId, TraitScore>,
    /// Run id of the manifest the profile was scored from.
    pub manifest_ref: String,
}

impl TraitProfile {
    pub fn is_complete(&self) -> bool {
        TraitId::ALL.iter().all(|t| self.scores.contains_key(t))
    }

    pub fn mean(&self, t: TraitId) -> Option<f64> {
        self.scores.get(&t).map(|s| s.mean)
    }

    /// Means in canonical order; `None` if any trait is absent.
    pub fn means(&self) -> Option<[f64; 16]> {
        let mut out = [0.0; 16];
        for t in TraitId::ALL {
            out[t.index()] = self.mean(t)?;
        }
        Some(out)
    }

    /// Builds a profile directly from 16 means (variance 0, n 1); used for
    /// reference tables and fixtures that only report means.
    pub fn from_means(model_id: &str, condition: Condition, means: &[f64; 16], manifest_ref: &str) -> Self {
        let scores = TraitId::ALL
            .iter()
            .map(|&t| {
                (
                    t,
                    TraitScore {
                        trait_id: t,
                        mean: means[t.index()],
                        variance_population: 0.0,
                        variance_sample: None,
                        n: 1,
                        n_missing: 0,
                    },
                )
            })
            .collect();
        TraitProfile {
            model_id: model_id.to_string(),
            condition,
            scores,
            manifest_ref: manifest_ref.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn keyed_scores() {
        assert_eq!(key_score(Letter::A, Polarity::Positive), 5);
        assert_eq!(key_score(Letter::E, Polarity::Positive), 1);
        assert_eq!(key_score(Letter::A, Polarity::Negative), 1);
        assert_eq!(key_score(Letter::E, Polarity::Negative), 5);
        assert_eq!(key_score(Letter::C, Polarity::Positive), 3);
        assert_eq!(key_score(Letter::C, Polarity::Negative), 3);
    }

    #[test]
    fn keying_bijection_all_ten_cases() {
        for l in Letter::ALL {
            assert_eq!(key_score(l, Polarity::Positive) + key_score(l, Polarity::Negative), 6);
            for key in [Polarity::Positive, Polarity::Negative] {
                let s = key_score(l, key);
                assert!((1..=5).contains(&s));
                assert_eq!(letter_for_score(s, key), Some(l));
                assert_eq!(key_score(l.mirrored(), key.flipped()), s);
            }
        }
        assert_eq!(letter_for_score(0, Polarity::Positive), None);
        assert_eq!(letter_for_score(6, Polarity::Negative), None);
    }

    #[test]
    fn four_response_example() {
        // A,B,A,C on positive items: 5,4,5,3
        let scores: Vec<_> = [Letter::A, Letter::B, Letter::A, Letter::C]
            .iter()
            .map(|l| Some(key_score(*l, Polarity::Positive)))
            .collect();
        let s = trait_score(TraitId::Warmth, &scores).unwrap();
        assert_eq!(s.mean, 4.25);
        // sum of squared deviations 0.5625 + 0.0625 + 0.5625 + 1.5625 = 2.75
        assert!((s.variance_population - 2.75 / 4.0).abs() < 1e-12);
        assert!((s.variance_sample.unwrap() - 2.75 / 3.0).abs() < 1e-12);
        assert_eq!((s.n, s.n_missing), (4, 0));
    }

    #[test]
    fn identical_responses_have_zero_variance() {
        let s = trait_score(TraitId::Reserve, &[Some(2); 7]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.variance_population, 0.0);
        assert_eq!(s.variance_sample, Some(0.0));
    }

    #[test]
    fn missing_responses_reduce_n() {
        let s = trait_score(TraitId::Anxiety, &[Some(5), None, Some(3), None]).unwrap();
        assert_eq!(s.mean, 4.0);
        assert_eq!((s.n, s.n_missing), (2, 2));
        assert_eq!(
            trait_score(TraitId::Anxiety, &[None, None]).unwrap_err(),
            ScoreError::NoData(TraitId::Anxiety)
        );
        assert_eq!(trait_score(TraitId::Anxiety, &[]).unwrap_err(), ScoreError::NoData(TraitId::Anxiety));
        assert_eq!(trait_score(TraitId::Anxiety, &[Some(6)]).unwrap_err(), ScoreError::OutOfScale(6));
    }

    #[test]
    fn single_response_has_no_sample_variance() {
        let s = trait_score(TraitId::Warmth, &[Some(4)]).unwrap();
        assert_eq!(s.variance_sample, None);
        assert_eq!(s.variance(VarianceMode::Sample), 0.0);
    }

    #[test]
    fn sac_scores() {
        let s = sac_trait_score(TraitId::Warmth, &[Some(3); 15]).unwrap();
        assert_eq!((s.mean, s.variance_population), (3.0, 0.0));

        let mut v = vec![Some(5); 5];
        v.extend([Some(3); 5]);
        v.extend([Some(1); 5]);
        let s = sac_trait_score(TraitId::Warmth, &v).unwrap();
        assert_eq!(s.mean, 3.0);
        // (5*4 + 0 + 5*4) / 15 = 40/15
        assert!((s.variance_population - 8.0 / 3.0).abs() < 1e-12);

        assert_eq!(
            sac_trait_score(TraitId::Warmth, &[Some(3); 14]).unwrap_err(),
            ScoreError::WrongSacShape(14)
        );
    }

    proptest! {
        #[test]
        fn bounds_hold(values in prop::collection::vec(prop::option::of(1u8..=5), 1..60)) {
            prop_assume!(values.iter().any(|v| v.is_some()));
            let s = trait_score(TraitId::Warmth, &values).unwrap();
            prop_assert!((1.0..=5.0).contains(&s.mean));
            prop_assert!((0.0..=4.0 + 1e-12).contains(&s.variance_population));
            // sample variance peaks at 4n/(n-1): half the answers at 1, half at 5
            if let Some(sv) = s.variance_sample {
                let cap = 4.0 * s.n as f64 / (s.n - 1) as f64;
                prop_assert!((0.0..=cap + 1e-12).contains(&sv));
                if s.n >= 5 {
                    prop_assert!(sv <= 5.0 + 1e-12);
                }
            }
            prop_assert_eq!(s.n + s.n_missing, values.len());
        }

        #[test]
        fn order_never_matters(values in prop::collection::vec(prop::option::of(1u8..=5), 1..40), seed in any::<u64>()) {
            prop_assume!(values.iter().any(|v| v.is_some()));
            let mut shuffled = values.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let a = trait_score(TraitId::Warmth, &values).unwrap();
            let b = trait_score(TraitId::Warmth, &shuffled).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!((a.variance_population - b.variance_population).abs() < 1e-12);
            prop_assert_eq!(a.n, b.n);
        }

        #[test]
        fn reversal_invariance(answers in prop::collection::vec((0usize..5, any::<bool>()), 1..40)) {
            let score = |flip: bool| {
                let v: Vec<_> = answers
                    .iter()
                    .map(|&(l, positive)| {
                        let letter = Letter::ALL[l];
                        let key = if positive { Polarity::Positive } else { Polarity::Negative };
                        if flip {
                            Some(key_score(letter.mirrored(), key.flipped()))
                        } else {
                            Some(key_score(letter, key))
                        }
                    })
                    .collect();
                trait_score(TraitId::Complexity, &v).unwrap()
            };
            prop_assert_eq!(score(false), score(true));
        }
    }
}
