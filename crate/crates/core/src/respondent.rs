//! A deterministic synthetic respondent parameterized by known trait
//! intensities and an inter-trait coupling matrix.
//!
//! Inventory answers reproduce `theta` exactly through the keying rules;
//! intensity answers shift the observed trait by `C[target][observed] * (L - 3) / 2`
//! under graded induction, so level 3 is a fixed point.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bank::{Item, ItemBank};
use crate::prompt::{ConditionKind, PromptJob};
use crate::scoring::{letter_for_score, Letter};
use crate::traits::TraitId;

#[derive(Debug, thiserror::Error)]
pub enum RespondentError {
    #[error("cannot read ground-truth file: {0}")]
    Io(#[from] std::io::Error),
    #[error("ground-truth file is malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid ground truth: {0}")]
    Invalid(String),
    #[error("job {job_id} has kind {kind}, expected {expected}")]
    WrongKind { job_id: String, kind: ConditionKind, expected: &'static str },
    #[error("job {0} references an item that is not in the bank")]
    UnknownItem(String),
}

/// Round half up: 2.5 -> 3, 3.4 -> 3.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

fn clamp_scale(x: i64) -> u8 {
    x.clamp(1, 5) as u8
}

/// True trait intensities and coupling for the synthetic respondent.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    theta: [f64; 16],
    coupling: [[f64; 16]; 16],
    seed: u64,
    noise_p: f64,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthDoc {
    theta: BTreeMap<TraitId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coupling: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    noise_p: f64,
}

fn identity() -> [[f64; 16]; 16] {
    let mut c = [[0.0; 16]; 16];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    c
}

impl GroundTruth {
    /// Uncoupled respondent (identity coupling), noiseless.
    pub fn new(theta: [f64; 16]) -> Result<Self, RespondentError> {
        Self::with_coupling(theta, identity())
    }

    pub fn uniform(value: f64) -> Result<Self, RespondentError> {
        Self::new([value; 16])
    }

    pub fn with_coupling(theta: [f64; 16], coupling: [[f64; 16]; 16]) -> Result<Self, RespondentError> {
        let gt = GroundTruth { theta, coupling, seed: 0, noise_p: 0.0 };
        gt.validate()?;
        Ok(gt)
    }

    /// Enables seeded noise: each answer moves one scale step up or down with probability `p`.
    pub fn with_noise(mut self, seed: u64, p: f64) -> Result<Self, RespondentError> {
        self.seed = seed;
        self.noise_p = p;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), RespondentError> {
        let invalid = |m: String| Err(RespondentError::Invalid(m));
        for t in TraitId::ALL {
            let v = self.theta[t.index()];
            if !(1.0..=5.0).contains(&v) {
                return invalid(format!("theta[{t}] = {v} outside [1, 5]"));
            }
        }
        for (i, row) in self.coupling.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if !(-2.0..=2.0).contains(&c) {
                    return invalid(format!("coupling[{i}][{j}] = {c} outside [-2, 2]"));
                }
            }
            if row[i] != 1.0 {
                return invalid(format!("coupling diagonal [{i}][{i}] = {} must be 1", row[i]));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_p) {
            return invalid(format!("noise probability {} outside [0, 1]", self.noise_p));
        }
        Ok(())
    }

    pub fn theta(&self, t: TraitId) -> f64 {
        self.theta[t.index()]
    }

    /// Effect on `observed` of inducing `target`.
    pub fn coupling(&self, target: TraitId, observed: TraitId) -> f64 {
        self.coupling[target.index()][observed.index()]
    }

    pub fn from_json_str(text: &str) -> Result<Self, RespondentError> {
        let doc: GroundTruthDoc = serde_json::from_str(text)?;
        let mut theta = [0.0; 16];
        for t in TraitId::ALL {
            theta[t.index()] = *doc
                .theta
                .get(&t)
                .ok_or_else(|| RespondentError::Invalid(format!("theta is missing {t}")))?;
        }
        let coupling = match doc.coupling {
            None => identity(),
            Some(rows) => {
                if rows.len() != 16 || rows.iter().any(|r| r.len() != 16) {
                    return Err(RespondentError::Invalid("coupling must be a 16x16 matrix".into()));
                }
                let mut c = [[0.0; 16]; 16];
                for (i, r) in rows.iter().enumerate() {
                    c[i].copy_from_slice(r);
                }
                c
            }
        };
        let gt = GroundTruth { theta, coupling, seed: doc.seed, noise_p: doc.noise_p };
        gt.validate()?;
        Ok(gt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RespondentError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let doc = GroundTruthDoc {
            theta: TraitId::ALL.iter().map(|&t| (t, self.theta(t))).collect(),
            coupling: Some(self.coupling.iter().map(|r| r.to_vec()).collect()),
            seed: self.seed,
            noise_p: self.noise_p,
        };
        serde_json::to_string_pretty(&doc).expect("ground truth serializes")
    }

    /// Shift applied to `observed` when `target` is induced at `level`.
    pub fn induced_shift(&self, target: TraitId, level: u8, observed: TraitId) -> f64 {
        self.coupling(target, observed) * (f64::from(level) - 3.0) / 2.0
    }

    /// Noise step for a job: -1, 0 or +1, reproducible from (seed, job_id).
    fn noise_step(&self, job_id: &str) -> i64 {
        if self.noise_p == 0.0 {
            return 0;
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(job_id.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        if rng.random_bool(self.noise_p) {
            if rng.random_bool(0.5) { 1 } else { -1 }
        } else {
            0
        }
    }
}

/// Inventory answer: the letter whose keyed score is round_half_up(theta).
pub fn answer_mpi(gt: &GroundTruth, item: &Item) -> Letter {
    let score = clamp_scale(round_half_up(gt.theta(item.trait_id)));
    letter_for_score(score, item.key).expect("score clamped to scale")
}

/// Inventory answer under binary induction of `target`, treated like
/// graded induction at the top level.
pub fn answer_p2(gt: &GroundTruth, target: TraitId, item: &Item) -> Letter {
    let shifted = gt.theta(item.trait_id) + gt.induced_shift(target, 5, item.trait_id);
    let score = clamp_scale(round_half_up(shifted));
    letter_for_score(score, item.key).expect("score clamped to scale")
}

/// Intensity answer for a SAC job.
pub fn answer_sac(gt: &GroundTruth, job: &PromptJob) -> Result<u8, RespondentError> {
    let observed = job.observed_trait;
    match (job.condition.kind, job.condition.induced_trait, job.condition.level) {
        (ConditionKind::SacNeutral, _, _) => Ok(clamp_scale(round_half_up(gt.theta(observed)))),
        (ConditionKind::SacInduced, Some(target), Some(level)) => {
            let v = gt.theta(observed) + gt.induced_shift(target, level, observed);
            Ok(clamp_scale(round_half_up(v)))
        }
        (kind, _, _) => Err(RespondentError::WrongKind {
            job_id: job.job_id.clone(),
            kind,
            expected: "SAC_NEUTRAL or SAC_INDUCED",
        }),
    }
}

/// Raw reply text for any job, including seeded noise when enabled.
pub fn respond(gt: &GroundTruth, bank: &ItemBank, job: &PromptJob) -> Result<String, RespondentError> {
    let step = gt.noise_step(&job.job_id);
    match job.condition.kind {
        ConditionKind::MpiNeutral | ConditionKind::P2Induced => {
            let item_id = job.item_id.as_deref().unwrap_or_default();
            let item = bank
                .item(item_id)
                .ok_or_else(|| RespondentError::UnknownItem(job.job_id.clone()))?;
            let letter = match job.condition.induced_trait {
                Some(target) => answer_p2(gt, target, item),
                None => answer_mpi(gt, item),
            };
            let letter = if step == 0 {
                letter
            } else {
                // move the keyed score, not the letter, so noise is polarity-symmetric
                let score = crate::scoring::key_score(letter, item.key) as i64 + step;
                letter_for_score(clamp_scale(score), item.key).expect("clamped")
            };
            Ok(letter.to_string())
        }
        ConditionKind::SacNeutral | ConditionKind::SacInduced => {
            let digit = answer_sac(gt, job)?;
            Ok(clamp_scale(i64::from(digit) + step).to_string())
        }
    }
}
