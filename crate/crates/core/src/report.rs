//! CSV and JSON reports over scored profiles.
//!
//! CSVs use two decimals, rounded half up, for reading against printed tables.
//! Each CSV has a JSON mirror at full precision that also lists the run ids
//! it was computed from.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate_co_movers, co_movers, cross_model_stats, delta_profile, distance_matrix, AnalysisError, CoMoverReport,
    CrossModelStat, DeltaVector,
};
use crate::prompt::{Condition, ConditionKind};
use crate::run::{write_atomic, write_json_atomic, ProfileSet, RunError};
use crate::scoring::{TraitProfile, VarianceMode};
use crate::traits::TraitId;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Inputs(String),
}

impl ReportError {
    pub fn is_config_error(&self) -> bool {
        match self {
            ReportError::Run(e) => e.is_config_error(),
            ReportError::Csv(_) => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Distances,
    Sd,
    Deltas,
    CoMovers,
}

impl std::str::FromStr for Analysis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "distances" | "distance" => Ok(Analysis::Distances),
            "sd" | "trait-sd" => Ok(Analysis::Sd),
            "deltas" | "delta" => Ok(Analysis::Deltas),
            "co-movers" | "comovers" | "co_movers" => Ok(Analysis::CoMovers),
            _ => Err(format!("unknown analysis {s:?}; expected distances, sd, deltas or co-movers")),
        }
    }
}

/// Two decimals, rounded half up (toward +inf), without a negative zero.
pub fn fmt2(x: f64) -> String {
    // shave representation error first so 2.345 rounds as written
    let scaled = (x * 100.0 * 1e6).round() / 1e6;
    let r = (scaled + 0.5).floor() / 100.0;
    let s = format!("{r:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| ReportError::Inputs(e.to_string()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, ReportError> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_atomic(path, &csv_bytes(&header, rows)?)?;
    Ok(path.to_path_buf())
}

/// File-name-safe condition label, e.g. `SAC_INDUCED_WARMTH_L5`.
pub fn condition_slug(c: &Condition) -> String {
    c.label().replace('/', "_")
}

fn sorted_profiles(set: &ProfileSet) -> Vec<&TraitProfile> {
    let mut v: Vec<&TraitProfile> = set.profiles.iter().collect();
    v.sort_by(|a, b| (&a.model_id, a.condition).cmp(&(&b.model_id, b.condition)));
    v
}

fn model_slug(m: &str) -> String {
    m.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// One 16-row CSV per profile plus a long table of all of them.
pub fn write_profile_reports(set: &ProfileSet, dir: &Path, mode: VarianceMode) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    let mut long = Vec::new();
    let models: std::collections::BTreeSet<&str> = set.profiles.iter().map(|p| p.model_id.as_str()).collect();
    for p in sorted_profiles(set) {
        let mut rows = Vec::new();
        for (t, s) in &p.scores {
            let var = fmt2(s.variance(mode));
            rows.push(vec![t.code().to_string(), fmt2(s.mean), var.clone(), s.n.to_string()]);
            long.push(vec![
                p.model_id.clone(),
                p.condition.kind.code().to_string(),
                p.condition.induced_trait.map(|t| t.code().to_string()).unwrap_or_default(),
                p.condition.level.map(|l| l.to_string()).unwrap_or_default(),
                t.code().to_string(),
                fmt2(s.mean),
                var,
                s.n.to_string(),
                s.n_missing.to_string(),
            ]);
        }
        let name = if models.len() > 1 {
            format!("profile_{}_{}.csv", model_slug(&p.model_id), condition_slug(&p.condition))
        } else {
            format!("profile_{}.csv", condition_slug(&p.condition))
        };
        written.push(write_csv(&dir.join(name), &["trait", "mean", "variance", "n"], &rows)?);
    }
    written.push(write_csv(
        &dir.join("profiles.csv"),
        &["model", "kind", "induced_trait", "level", "trait", "mean", "variance", "n", "n_missing"],
        &long,
    )?);
    Ok(written)
}

/// The neutral profiles of one kind, one per model, in model order.
fn neutral_profiles(set: &ProfileSet, kind: Option<ConditionKind>) -> Result<Vec<TraitProfile>, ReportError> {
    let kind = match kind {
        Some(k) if k.is_induced() => {
            return Err(ReportError::Inputs(format!("distances and SD compare neutral profiles, not {k}")))
        }
        Some(k) => k,
        None if set.profiles.iter().any(|p| p.condition.kind == ConditionKind::MpiNeutral) => ConditionKind::MpiNeutral,
        None => ConditionKind::SacNeutral,
    };
    let mut by_model: BTreeMap<&str, &TraitProfile> = BTreeMap::new();
    for p in set.profiles.iter().filter(|p| p.condition.kind == kind) {
        if by_model.insert(&p.model_id, p).is_some() {
            return Err(ReportError::Inputs(format!("model {} has more than one {kind} profile", p.model_id)));
        }
    }
    Ok(by_model.into_values().cloned().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub run_ids: Vec<String>,
    pub kind: ConditionKind,
    pub models: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

pub fn distance_report(set: &ProfileSet, kind: Option<ConditionKind>) -> Result<DistanceReport, ReportError> {
    let profiles = neutral_profiles(set, kind)?;
    if profiles.len() < 2 {
        return Err(ReportError::Inputs(format!("distances need at least 2 models, got {}", profiles.len())));
    }
    Ok(DistanceReport {
        run_ids: set.run_ids.clone(),
        kind: profiles[0].condition.kind,
        models: profiles.iter().map(|p| p.model_id.clone()).collect(),
        matrix: distance_matrix(&profiles)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdReport {
    pub run_ids: Vec<String>,
    pub kind: ConditionKind,
    pub models: Vec<String>,
    pub traits: Vec<CrossModelStat>,
}

pub fn sd_report(set: &ProfileSet, kind: Option<ConditionKind>) -> Result<SdReport, ReportError> {
    let profiles = neutral_profiles(set, kind)?;
    if profiles.is_empty() {
        return Err(ReportError::Inputs("no neutral profiles in the inputs".into()));
    }
    Ok(SdReport {
        run_ids: set.run_ids.clone(),
        kind: profiles[0].condition.kind,
        models: profiles.iter().map(|p| p.model_id.clone()).collect(),
        traits: cross_model_stats(&profiles)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub run_ids: Vec<String>,
    pub vectors: Vec<DeltaVector>,
}

/// Every induced profile against its model's neutral baseline.
pub fn delta_report(set: &ProfileSet) -> Result<DeltaReport, ReportError> {
    let mut vectors = Vec::new();
    for p in sorted_profiles(set).into_iter().filter(|p| p.condition.kind.is_induced()) {
        let base_kind = p.condition.kind.neutral_baseline();
        let base = set
            .profiles
            .iter()
            .find(|b| b.model_id == p.model_id && b.condition.kind == base_kind)
            .ok_or_else(|| {
                ReportError::Inputs(format!("no {base_kind} baseline for model {} ({})", p.model_id, p.condition.label()))
            })?;
        vectors.push(delta_profile(p, base)?);
    }
    if vectors.is_empty() {
        return Err(ReportError::Inputs("no induced profiles in the inputs".into()));
    }
    Ok(DeltaReport { run_ids: set.run_ids.clone(), vectors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoMoverSet {
    pub run_ids: Vec<String>,
    /// One report per (model, target, level).
    pub per_level: Vec<CoMoverReport>,
    /// One report per (model, target), each trait at its peak |delta| over levels.
    pub aggregate: Vec<CoMoverReport>,
}

pub fn co_mover_report(deltas: &DeltaReport) -> CoMoverSet {
    let per_level = deltas.vectors.iter().map(co_movers).collect();
    let mut groups: BTreeMap<(String, TraitId), Vec<DeltaVector>> = BTreeMap::new();
    for v in &deltas.vectors {
        groups.entry((v.model_id.clone(), v.target_trait)).or_default().push(v.clone());
    }
    let aggregate = groups.values().filter_map(|g| aggregate_co_movers(g)).collect();
    CoMoverSet { run_ids: deltas.run_ids.clone(), per_level, aggregate }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// `None` for single-shot inductions.
    pub level: Option<u8>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitSeries {
    #[serde(rename = "trait")]
    pub trait_id: TraitId,
    pub role: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPlot {
    pub model_id: String,
    pub target_trait: TraitId,
    pub series: Vec<TraitSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub run_ids: Vec<String>,
    pub chart: String,
    pub plots: Vec<TargetPlot>,
}

fn series_for(vectors: &[&DeltaVector], t: TraitId, role: &str) -> TraitSeries {
    TraitSeries {
        trait_id: t,
        role: role.to_string(),
        points: vectors.iter().map(|v| SeriesPoint { level: v.level, delta: v.get(t) }).collect(),
    }
}

fn group_by_target(deltas: &DeltaReport) -> BTreeMap<(String, TraitId), Vec<&DeltaVector>> {
    let mut groups: BTreeMap<(String, TraitId), Vec<&DeltaVector>> = BTreeMap::new();
    for v in &deltas.vectors {
        groups.entry((v.model_id.clone(), v.target_trait)).or_default().push(v);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|v| v.level);
    }
    groups
}

/// Bar-chart data: every trait's delta at each level, per target.
pub fn delta_plot(deltas: &DeltaReport) -> PlotData {
    let plots = group_by_target(deltas)
        .into_iter()
        .map(|((model_id, target), vs)| TargetPlot {
            model_id,
            target_trait: target,
            series: TraitId::ALL
                .iter()
                .map(|&t| series_for(&vs, t, if t == target { "target" } else { "other" }))
                .collect(),
        })
        .collect();
    PlotData { run_ids: deltas.run_ids.clone(), chart: "delta-bars".into(), plots }
}

/// Line-chart data: the target and its two aggregate co-movers across levels.
pub fn co_mover_plot(deltas: &DeltaReport, co: &CoMoverSet) -> PlotData {
    let groups = group_by_target(deltas);
    let plots = co
        .aggregate
        .iter()
        .filter_map(|r| {
            let vs = groups.get(&(r.model_id.clone(), r.target_trait))?;
            Some(TargetPlot {
                model_id: r.model_id.clone(),
                target_trait: r.target_trait,
                series: vec![
                    series_for(vs, r.target_trait, "target"),
                    series_for(vs, r.first.trait_id, "co-mover-1"),
                    series_for(vs, r.second.trait_id, "co-mover-2"),
                ],
            })
        })
        .collect();
    PlotData { run_ids: deltas.run_ids.clone(), chart: "co-mover-lines".into(), plots }
}

fn opt_level(l: Option<u8>) -> String {
    l.map(|l| l.to_string()).unwrap_or_default()
}

pub fn write_distance_report(r: &DistanceReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut header = vec!["model"];
    header.extend(r.models.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = r
        .models
        .iter()
        .zip(&r.matrix)
        .map(|(m, row)| std::iter::once(m.clone()).chain(row.iter().map(|d| fmt2(*d))).collect())
        .collect();
    let csv = write_csv(&dir.join("distances.csv"), &header, &rows)?;
    let json = dir.join("distances.json");
    write_json_atomic(&json, r)?;
    Ok(vec![csv, json])
}

pub fn write_sd_report(r: &SdReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut header = vec!["trait"];
    let mean_cols: Vec<String> = r.models.iter().map(|m| format!("mean_{m}")).collect();
    header.extend(mean_cols.iter().map(String::as_str));
    header.extend(["sd_sample", "sd_population"]);
    let rows: Vec<Vec<String>> = r
        .traits
        .iter()
        .map(|s| {
            let mut row = vec![s.trait_id.code().to_string()];
            row.extend(s.per_model_means.iter().map(|m| fmt2(*m)));
            row.push(fmt2(s.sd_sample));
            row.push(fmt2(s.sd_population));
            row
        })
        .collect();
    let csv = write_csv(&dir.join("trait_sd.csv"), &header, &rows)?;
    let json = dir.join("trait_sd.json");
    write_json_atomic(&json, r)?;
    Ok(vec![csv, json])
}

pub fn write_delta_report(r: &DeltaReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut out = Vec::new();
    let mut long = Vec::new();
    for v in &r.vectors {
        let kind = if v.level.is_some() { ConditionKind::SacInduced } else { ConditionKind::P2Induced };
        for t in TraitId::ALL {
            long.push(vec![
                v.model_id.clone(),
                kind.code().to_string(),
                v.target_trait.code().to_string(),
                opt_level(v.level),
                t.code().to_string(),
                fmt2(v.get(t)),
            ]);
        }
    }
    out.push(write_csv(
        &dir.join("deltas_long.csv"),
        &["model", "kind", "target", "level", "trait", "delta"],
        &long,
    )?);

    // single-shot inductions as target x trait tables, one per model
    let mut wide: BTreeMap<&str, Vec<&DeltaVector>> = BTreeMap::new();
    for v in r.vectors.iter().filter(|v| v.level.is_none()) {
        wide.entry(&v.model_id).or_default().push(v);
    }
    let models = wide.len();
    for (model, vs) in wide {
        let mut header = vec!["target"];
        header.extend(TraitId::ALL.iter().map(|t| t.code()));
        let rows: Vec<Vec<String>> = vs
            .iter()
            .map(|v| {
                std::iter::once(v.target_trait.code().to_string())
                    .chain(TraitId::ALL.iter().map(|&t| fmt2(v.get(t))))
                    .collect()
            })
            .collect();
        let name = if models > 1 { format!("deltas_p2_{}.csv", model_slug(model)) } else { "deltas_p2.csv".into() };
        out.push(write_csv(&dir.join(name), &header, &rows)?);
    }
    let json = dir.join("deltas.json");
    write_json_atomic(&json, r)?;
    out.push(json);
    let plot = dir.join("plot_deltas.json");
    write_json_atomic(&plot, &delta_plot(r))?;
    out.push(plot);
    Ok(out)
}

pub fn write_co_mover_report(deltas: &DeltaReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let co = co_mover_report(deltas);
    let row = |r: &CoMoverReport, level: String| {
        vec![
            r.model_id.clone(),
            r.target_trait.code().to_string(),
            level,
            r.first.trait_id.code().to_string(),
            fmt2(r.first.delta),
            r.second.trait_id.code().to_string(),
            fmt2(r.second.delta),
        ]
    };
    let mut rows: Vec<Vec<String>> = co.per_level.iter().map(|r| row(r, opt_level(r.level))).collect();
    // a single-level target's aggregate would repeat its only row
    let multi: std::collections::BTreeSet<(String, TraitId)> = {
        let mut counts: BTreeMap<(String, TraitId), usize> = BTreeMap::new();
        for v in &deltas.vectors {
            *counts.entry((v.model_id.clone(), v.target_trait)).or_default() += 1;
        }
        counts.into_iter().filter(|(_, n)| *n > 1).map(|(k, _)| k).collect()
    };
    rows.extend(
        co.aggregate
            .iter()
            .filter(|r| multi.contains(&(r.model_id.clone(), r.target_trait)))
            .map(|r| row(r, "ALL".into())),
    );
    let csv = write_csv(
        &dir.join("co_movers.csv"),
        &["model", "target", "level", "first", "first_delta", "second", "second_delta"],
        &rows,
    )?;
    let json = dir.join("co_movers.json");
    write_json_atomic(&json, &co)?;
    let plot = dir.join("plot_co_movers.json");
    write_json_atomic(&plot, &co_mover_plot(deltas, &co))?;
    Ok(vec![csv, json, plot])
}

/// Runs the requested analyses and writes their files into `dir`.
pub fn write_analyses(
    set: &ProfileSet,
    analyses: &[Analysis],
    kind: Option<ConditionKind>,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(|err| RunError::Io { path: dir.to_path_buf(), err })?;
    let mut out = Vec::new();
    let mut deltas: Option<DeltaReport> = None;
    for a in analyses {
        match a {
            Analysis::Distances => out.extend(write_distance_report(&distance_report(set, kind)?, dir)?),
            Analysis::Sd => out.extend(write_sd_report(&sd_report(set, kind)?, dir)?),
            Analysis::Deltas | Analysis::CoMovers => {
                if deltas.is_none() {
                    deltas = Some(delta_report(set)?);
                }
                let d = deltas.as_ref().expect("set above");
                if *a == Analysis::Deltas {
                    out.extend(write_delta_report(d, dir)?);
                } else {
                    out.extend(write_co_mover_report(d, dir)?);
                }
            }
        }
    }
    Ok(out)
}

/// Every report the inputs support: profiles always, cross-model tables with
/// two or more models, deltas and co-movers when induced profiles have baselines.
pub fn write_all_reports(set: &ProfileSet, dir: &Path, mode: VarianceMode) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(|err| RunError::Io { path: dir.to_path_buf(), err })?;
    let mut out = write_profile_reports(set, dir, mode)?;
    for kind in [ConditionKind::MpiNeutral, ConditionKind::SacNeutral] {
        let n = neutral_profiles(set, Some(kind))?.len();
        if n >= 2 {
            let sub = dir.join(kind.code().to_ascii_lowercase());
            out.extend(write_analyses(set, &[Analysis::Distances, Analysis::Sd], Some(kind), &sub)?);
        }
    }
    if set.profiles.iter().any(|p| p.condition.kind.is_induced()) {
        out.extend(write_analyses(set, &[Analysis::Deltas, Analysis::CoMovers], None, dir)?);
    }
    Ok(out)
}
