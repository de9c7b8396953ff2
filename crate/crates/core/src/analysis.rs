//! Cross-model and cross-condition analytics over trait profiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::prompt::ConditionKind;
use crate::scoring::{TraitProfile, VarianceMode};
use crate::traits::TraitId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("profile for {model} under {condition} lacks trait {missing}")]
    IncompleteProfile { model: String, condition: String, missing: TraitId },
    #[error("cannot compare {a} with {b}: condition kinds differ")]
    ConditionMismatch { a: ConditionKind, b: ConditionKind },
    #[error("cannot take {induced} deltas against a {neutral} baseline")]
    FamilyMismatch { induced: ConditionKind, neutral: ConditionKind },
    #[error("delta requires an induced condition, got {0}")]
    NotInduced(ConditionKind),
    #[error("profiles belong to different models ({0} vs {1})")]
    ModelMismatch(String, String),
    #[error("cross-model SD needs at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("mean {0} outside [1, 5]")]
    MeanOutOfRange(f64),
}

fn complete_means(p: &TraitProfile) -> Result<[f64; 16], AnalysisError> {
    let mut out = [0.0; 16];
    for t in TraitId::ALL {
        out[t.index()] = p.mean(t).ok_or_else(|| AnalysisError::IncompleteProfile {
            model: p.model_id.clone(),
            condition: p.condition.label(),
            missing: t,
        })?;
    }
    Ok(out)
}

/// Euclidean distance between the 16 trait means of two profiles.
pub fn euclidean_distance(a: &TraitProfile, b: &TraitProfile) -> Result<f64, AnalysisError> {
    if a.condition.kind != b.condition.kind {
        return Err(AnalysisError::ConditionMismatch { a: a.condition.kind, b: b.condition.kind });
    }
    Ok(distance(&complete_means(a)?, &complete_means(b)?))
}

/// Euclidean distance between two mean vectors in canonical trait order.
pub fn distance(a: &[f64; 16], b: &[f64; 16]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Symmetric distance matrix over `profiles`, in input order.
pub fn distance_matrix(profiles: &[TraitProfile]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let n = profiles.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean_distance(&profiles[i], &profiles[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// Standard deviation of one trait's mean across models.
///
/// `Population` divides by M, `Sample` by M - 1.
pub fn cross_model_sd(means: &[f64], mode: VarianceMode) -> Result<f64, AnalysisError> {
    let m = means.len();
    if m < 2 {
        return Err(AnalysisError::TooFewModels(m));
    }
    let mean = means.iter().sum::<f64>() / m as f64;
    let ss: f64 = means.iter().map(|x| (x - mean).powi(2)).sum();
    let denom = match mode {
        VarianceMode::Population => m as f64,
        VarianceMode::Sample => (m - 1) as f64,
    };
    Ok((ss / denom).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModelStat {
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub per_model_means: Vec<f64>,
    pub sd_sample: f64,
    pub sd_population: f64,
}

/// Per-trait cross-model SDs in canonical order.
pub fn cross_model_stats(profiles: &[TraitProfile]) -> Result<Vec<CrossModelStat>, AnalysisError> {
    if profiles.len() < 2 {
        return Err(AnalysisError::TooFewModels(profiles.len()));
    }
    let all: Vec<[f64; 16]> = profiles.iter().map(complete_means).collect::<Result<_, _>>()?;
    TraitId::ALL
        .iter()
        .map(|&t| {
            let per_model_means: Vec<f64> = all.iter().map(|m| m[t.index()]).collect();
            Ok(CrossModelStat {
                trait_id: t,
                sd_sample: cross_model_sd(&per_model_means, VarianceMode::Sample)?,
                sd_population: cross_model_sd(&per_model_means, VarianceMode::Population)?,
                per_model_means,
            })
        })
        .collect()
}

/// Induced mean minus neutral mean.
pub fn delta(induced_mean: f64, neutral_mean: f64) -> f64 {
    induced_mean - neutral_mean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaVector {
    pub model_id: String,
    pub target_trait: TraitId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    pub deltas: BTreeMap<TraitId, f64>,
}

impl DeltaVector {
    pub fn get(&self, t: TraitId) -> f64 {
        self.deltas.get(&t).copied().unwrap_or(0.0)
    }
}

/// Per-trait deltas of an induced profile against its baseline.
///
/// The baseline must be the neutral condition of the same family, or another
/// induced profile of the same kind (for comparing two inductions).
pub fn delta_profile(induced: &TraitProfile, neutral: &TraitProfile) -> Result<DeltaVector, AnalysisError> {
    let ik = induced.condition.kind;
    let nk = neutral.condition.kind;
    let target = match induced.condition.induced_trait {
        Some(t) if ik.is_induced() => t,
        _ => return Err(AnalysisError::NotInduced(ik)),
    };
    if nk != ik.neutral_baseline() && nk != ik {
        return Err(AnalysisError::FamilyMismatch { induced: ik, neutral: nk });
    }
    if induced.model_id != neutral.model_id {
        return Err(AnalysisError::ModelMismatch(induced.model_id.clone(), neutral.model_id.clone()));
    }
    let a = complete_means(induced)?;
    let b = complete_means(neutral)?;
    let mut deltas = BTreeMap::new();
    for t in TraitId::ALL {
        let (x, y) = (a[t.index()], b[t.index()]);
        for v in [x, y] {
            if !(1.0..=5.0).contains(&v) {
                return Err(AnalysisError::MeanOutOfRange(v));
            }
        }
        let d = delta(x, y);
        debug_assert!((-4.0..=4.0).contains(&d));
        deltas.insert(t, d);
    }
    Ok(DeltaVector {
        model_id: induced.model_id.clone(),
        target_trait: target,
        level: induced.condition.level,
        deltas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoMover {
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoMoverReport {
    pub model_id: String,
    pub target_trait: TraitId,
    /// `None` for the aggregate over levels.
    pub level: Option<u8>,
    pub first: CoMover,
    pub second: CoMover,
}

/// The two non-target traits with the largest |delta|; ties go to the
/// earlier trait in canonical order.
pub fn co_movers(v: &DeltaVector) -> CoMoverReport {
    let mut best: [Option<CoMover>; 2] = [None, None];
    for t in TraitId::ALL {
        if t == v.target_trait {
            continue;
        }
        let cand = CoMover { trait_id: t, delta: v.get(t) };
        // strict comparison keeps the earlier trait on ties
        let beats = |slot: &Option<CoMover>| slot.as_ref().is_none_or(|b| cand.delta.abs() > b.delta.abs());
        if beats(&best[0]) {
            best[1] = best[0].take();
            best[0] = Some(cand);
        } else if beats(&best[1]) {
            best[1] = Some(cand);
        }
    }
    let [first, second] = best;
    CoMoverReport {
        model_id: v.model_id.clone(),
        target_trait: v.target_trait,
        level: v.level,
        first: first.expect("15 candidates"),
        second: second.expect("15 candidates"),
    }
}

/// Co-movers across several levels of one target: each trait is represented by
/// its signed delta at the level where |delta| is largest (earliest level on ties).
pub fn aggregate_co_movers(vectors: &[DeltaVector]) -> Option<CoMoverReport> {
    let first = vectors.first()?;
    let target = first.target_trait;
    let mut agg = BTreeMap::new();
    for t in TraitId::ALL {
        let mut best: Option<f64> = None;
        for v in vectors.iter().filter(|v| v.target_trait == target && v.model_id == first.model_id) {
            let d = v.get(t);
            if best.is_none_or(|b| d.abs() > b.abs()) {
                best = Some(d);
            }
        }
        agg.insert(t, best.unwrap_or(0.0));
    }
    let mut report = co_movers(&DeltaVector {
        model_id: first.model_id.clone(),
        target_trait: target,
        level: None,
        deltas: agg,
    });
    report.level = None;
    Some(report)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::prompt::Condition;

    fn profile(model: &str, condition: Condition, means: [f64; 16]) -> TraitProfile {
        TraitProfile::from_means(model, condition, &means, "run")
    }

    fn deltas_with(target: TraitId, entries: &[(TraitId, f64)]) -> DeltaVector {
        let mut deltas: BTreeMap<_, _> = TraitId::ALL.iter().map(|&t| (t, 0.0)).collect();
        for &(t, d) in entries {
            deltas.insert(t, d);
        }
        DeltaVector { model_id: "m".into(), target_trait: target, level: Some(5), deltas }
    }

    /// Sorts every non-target trait by (|delta| desc, canonical order asc).
    fn exhaustive_top_two(v: &DeltaVector) -> (TraitId, TraitId) {
        let mut all: Vec<_> = TraitId::ALL.iter().filter(|&&t| t != v.target_trait).copied().collect();
        all.sort_by(|a, b| {
            v.get(*b)
                .abs()
                .partial_cmp(&v.get(*a).abs())
                .unwrap()
                .then(a.index().cmp(&b.index()))
        });
        (all[0], all[1])
    }

    #[test]
    fn identical_profiles_have_zero_distance() {
        let p = profile("a", Condition::mpi_neutral(), [3.3; 16]);
        assert_eq!(euclidean_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn distance_requires_same_kind_and_complete_profiles() {
        let a = profile("a", Condition::mpi_neutral(), [3.0; 16]);
        let b = profile("b", Condition::sac_neutral(), [3.0; 16]);
        assert!(matches!(euclidean_distance(&a, &b), Err(AnalysisError::ConditionMismatch { .. })));
        let mut c = profile("c", Condition::mpi_neutral(), [3.0; 16]);
        c.scores.remove(&TraitId::Reserve);
        assert!(matches!(
            euclidean_distance(&a, &c),
            Err(AnalysisError::IncompleteProfile { missing: TraitId::Reserve, .. })
        ));
    }

    #[test]
    fn sd_modes() {
        let w = [4.60, 4.90, 4.70];
        // ss = 0.0466..., sample sqrt(ss/2) = 0.1528, population sqrt(ss/3) = 0.1247
        assert!((cross_model_sd(&w, VarianceMode::Sample).unwrap() - 0.152_752_5).abs() < 1e-6);
        assert!((cross_model_sd(&w, VarianceMode::Population).unwrap() - 0.124_721_9).abs() < 1e-6);
        assert!((cross_model_sd(&[3.20, 2.30, 3.60], VarianceMode::Sample).unwrap() - 0.67).abs() <= 0.005);
        assert_eq!(cross_model_sd(&[2.0, 2.0], VarianceMode::Sample).unwrap(), 0.0);
        assert_eq!(cross_model_sd(&[2.0, 2.0], VarianceMode::Population).unwrap(), 0.0);
        assert_eq!(cross_model_sd(&[2.0], VarianceMode::Sample).unwrap_err(), AnalysisError::TooFewModels(1));
    }

    #[test]
    fn delta_examples() {
        assert!((delta(2.90, 4.70) - -1.80).abs() < 1e-12);
        assert!((delta(5.00, 2.80) - 2.20).abs() < 1e-12);
        assert_eq!(delta(3.7, 3.7), 0.0);
    }

    #[test]
    fn delta_profile_family_rules() {
        let neutral = profile("m", Condition::sac_neutral(), [3.0; 16]);
        let induced = profile("m", Condition::sac_induced(TraitId::Warmth, 5).unwrap(), [3.0; 16]);
        let v = delta_profile(&induced, &neutral).unwrap();
        assert!(v.deltas.values().all(|d| *d == 0.0));
        assert_eq!((v.target_trait, v.level), (TraitId::Warmth, Some(5)));

        let mpi = profile("m", Condition::mpi_neutral(), [3.0; 16]);
        assert!(matches!(delta_profile(&induced, &mpi), Err(AnalysisError::FamilyMismatch { .. })));
        let p2 = profile("m", Condition::p2_induced(TraitId::Reserve), [3.0; 16]);
        assert!(delta_profile(&p2, &mpi).is_ok());
        assert!(matches!(delta_profile(&p2, &neutral), Err(AnalysisError::FamilyMismatch { .. })));
        assert!(matches!(delta_profile(&mpi, &mpi), Err(AnalysisError::NotInduced(_))));
        let other = profile("x", Condition::sac_neutral(), [3.0; 16]);
        assert!(matches!(delta_profile(&induced, &other), Err(AnalysisError::ModelMismatch(..))));
    }

    #[test]
    fn co_movers_examples() {
        let mut entries = vec![(TraitId::Warmth, 2.0), (TraitId::Distrust, -1.2), (TraitId::Reserve, -0.9)];
        entries.push((TraitId::Anxiety, 0.3));
        entries.push((TraitId::Intellect, -0.25));
        let v = deltas_with(TraitId::Warmth, &entries);
        let r = co_movers(&v);
        assert_eq!(r.first, CoMover { trait_id: TraitId::Distrust, delta: -1.2 });
        assert_eq!(r.second, CoMover { trait_id: TraitId::Reserve, delta: -0.9 });
        assert_eq!((r.first.trait_id, r.second.trait_id), exhaustive_top_two(&v));

        let zeros = deltas_with(TraitId::Warmth, &[(TraitId::Warmth, 1.5)]);
        let r = co_movers(&zeros);
        assert_eq!((r.first.trait_id, r.second.trait_id), (TraitId::Intellect, TraitId::EmotionalStability));

        let tie = deltas_with(TraitId::Intellect, &[(TraitId::Orderliness, 0.8), (TraitId::Sensitivity, -0.8)]);
        let r = co_movers(&tie);
        assert_eq!(r.first.trait_id, TraitId::Sensitivity);
        assert_eq!(r.second.trait_id, TraitId::Orderliness);
    }

    #[test]
    fn aggregate_takes_peak_level() {
        let mut l1 = deltas_with(TraitId::Warmth, &[(TraitId::Reserve, 0.4), (TraitId::Anxiety, -1.0)]);
        l1.level = Some(1);
        let mut l5 = deltas_with(TraitId::Warmth, &[(TraitId::Reserve, -1.5), (TraitId::Anxiety, 0.2)]);
        l5.level = Some(5);
        let r = aggregate_co_movers(&[l1, l5]).unwrap();
        assert_eq!(r.level, None);
        assert_eq!(r.first, CoMover { trait_id: TraitId::Reserve, delta: -1.5 });
        assert_eq!(r.second, CoMover { trait_id: TraitId::Anxiety, delta: -1.0 });
        assert!(aggregate_co_movers(&[]).is_none());
    }

    fn means_strategy() -> impl Strategy<Value = [f64; 16]> {
        prop::array::uniform16(1.0f64..=5.0)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in means_strategy(), b in means_strategy(), c in means_strategy()) {
            let dab = distance(&a, &b);
            prop_assert!((dab - distance(&b, &a)).abs() < 1e-12);
            prop_assert_eq!(distance(&a, &a), 0.0);
            prop_assert!(distance(&a, &c) <= dab + distance(&b, &c) + 1e-12);
        }

        #[test]
        fn sample_sd_dominates_population(means in prop::collection::vec(1.0f64..=5.0, 2..8)) {
            let s = cross_model_sd(&means, VarianceMode::Sample).unwrap();
            let p = cross_model_sd(&means, VarianceMode::Population).unwrap();
            prop_assert!(s >= p);
            prop_assert!(p >= 0.0);
        }

        #[test]
        fn delta_antisymmetry(a in means_strategy(), b in means_strategy()) {
            let c = Condition::sac_induced(TraitId::Anxiety, 1).unwrap();
            let pa = profile("m", c, a);
            let pb = profile("m", c, b);
            let ab = delta_profile(&pa, &pb).unwrap();
            let ba = delta_profile(&pb, &pa).unwrap();
            for t in TraitId::ALL {
                prop_assert_eq!(ab.get(t), -ba.get(t));
            }
        }

        #[test]
        fn co_movers_match_exhaustive_scan(
            raw in prop::array::uniform16(-8i32..=8),
            target in 0usize..16,
        ) {
            // quarter steps make ties common
            let target = TraitId::ALL[target];
            let entries: Vec<_> = TraitId::ALL.iter().map(|&t| (t, f64::from(raw[t.index()]) / 4.0)).collect();
            let v = deltas_with(target, &entries);
            let r = co_movers(&v);
            prop_assert_eq!((r.first.trait_id, r.second.trait_id), exhaustive_top_two(&v));
            prop_assert!(r.first.trait_id != target && r.second.trait_id != target);
            prop_assert!(r.first.delta.abs() >= r.second.delta.abs());

            // storage order does not matter: rebuild the map in reverse insertion order
            let reversed = DeltaVector {
                deltas: entries.iter().rev().copied().collect(),
                ..v.clone()
            };
            prop_assert_eq!(co_movers(&reversed), r);
        }
    }
}
