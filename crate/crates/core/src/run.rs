//! Run manifests, the on-disk run layout, resume, and scoring a log into profiles.
//!
//! A run directory holds:
//!
//! - `manifest.json`: everything that determines the plan
//! - `plan.jsonl`: the enumerated jobs
//! - `records.jsonl`: one [`ResponseRecord`] per executed job, append-only
//! - `profiles.json`: the scored [`ProfileSet`]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bank::ItemBank;
use crate::gateway::{
    backend_for, run_batch, BackendError, BatchSummary, ConfigError, Gateway, JsonlSink, ModelSpec, ResponseCache,
    RetryPolicy,
};
use crate::prompt::{enumerate_plan, write_plan_jsonl, Condition, ConditionKind, PlanOptions, PromptError, PromptJob};
use crate::record::ResponseRecord;
use crate::scoring::{key_score, trait_score, ScoreError, TraitProfile};
use crate::traits::TraitId;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLAN_FILE: &str = "plan.jsonl";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const PROFILES_FILE: &str = "profiles.json";

const PARSER_POLICY: &str = "letters: trim, strip one trailing '.' or ')', uppercase, single char A-E, \
else one distinct standalone A-E token; digits: exact 1-5, else one distinct numeric token; \
ambiguous replies re-asked once, then missing";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot start backend: {0}")]
    Backend(#[from] BackendError),
    #[error("{0} already holds a run; pass --resume to continue it or pick another --out")]
    AlreadyExists(PathBuf),
    #[error("manifest in {dir} is for run {found}, but these settings give run {expected}")]
    RunIdMismatch { dir: PathBuf, expected: String, found: String },
    #[error("{path} line {line}: {reason}")]
    CorruptLog { path: PathBuf, line: usize, reason: String },
    #[error("{path}: {reason}")]
    BadArtifact { path: PathBuf, reason: String },
    #[error("inputs mix bank digests {0} and {1}")]
    MixedBank(String, String),
    #[error("scoring: {0}")]
    Score(#[from] ScoreError),
}

impl RunError {
    /// True for problems with the inputs or settings rather than the run itself.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, RunError::Io { .. })
    }
}

pub(crate) fn io_at(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |err| RunError::Io { path: path.to_path_buf(), err }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub created_at: String,
    pub bank_digest: String,
    pub bank_version: String,
    pub model: ModelSpec,
    pub grid: PlanOptions,
    pub decoding: Decoding,
    pub parser_policy: String,
    pub job_order: String,
    pub message_layout: String,
    pub job_count: usize,
}

impl RunManifest {
    pub fn new(bank: &ItemBank, model: &ModelSpec, grid: &PlanOptions, job_count: usize) -> Self {
        let mut m = RunManifest {
            run_id: String::new(),
            tool_version: TOOL_VERSION.to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            bank_digest: bank.digest().to_string(),
            bank_version: bank.version.clone(),
            model: model.clone(),
            grid: canonical_grid(grid),
            decoding: Decoding { temperature: model.temperature, max_tokens: model.max_tokens },
            parser_policy: PARSER_POLICY.to_string(),
            job_order: "canonical".to_string(),
            message_layout: "single user message".to_string(),
            job_count,
        };
        m.run_id = m.compute_run_id();
        m
    }

    /// Digest of every field except the id itself and the creation time.
    pub fn compute_run_id(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        let obj = v.as_object_mut().expect("object");
        obj.remove("run_id");
        obj.remove("created_at");
        let h = Sha256::digest(v.to_string().as_bytes());
        hex::encode(&h[..8])
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text).map_err(|e| RunError::BadArtifact { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn plan(&self, bank: &ItemBank) -> Result<Vec<PromptJob>, RunError> {
        Ok(enumerate_plan(bank, &self.grid)?)
    }
}

/// Grid with targets and levels as the plan will actually use them.
fn canonical_grid(grid: &PlanOptions) -> PlanOptions {
    let mut g = grid.clone();
    g.targets.sort();
    g.targets.dedup();
    g.levels.sort();
    g.levels.dedup();
    g.repeats = g.repeats.max(1);
    match g.kind {
        ConditionKind::MpiNeutral | ConditionKind::SacNeutral => {
            g.targets = TraitId::ALL.to_vec();
            g.levels = crate::prompt::default_levels();
        }
        ConditionKind::P2Induced => g.levels = crate::prompt::default_levels(),
        ConditionKind::SacInduced => {}
    }
    g
}

/// Settings for one execution of a run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub out_dir: PathBuf,
    pub resume: bool,
    pub concurrency: usize,
    pub cache_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
}

impl RunSettings {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunSettings {
            out_dir: out_dir.into(),
            resume: false,
            concurrency: 4,
            cache_dir: None,
            retry: RetryPolicy::default(),
        }
    }
}

/// A run directory ready for execution.
#[derive(Debug)]
pub struct PreparedRun {
    pub manifest: RunManifest,
    pub jobs: Vec<PromptJob>,
    pub completed: HashSet<String>,
    pub out_dir: PathBuf,
}

/// Creates or reopens the run directory. On resume the manifest must match
/// and a torn final log line is cut off.
pub fn prepare_run(
    bank: &ItemBank,
    model: &ModelSpec,
    grid: &PlanOptions,
    out_dir: &Path,
    resume: bool,
) -> Result<PreparedRun, RunError> {
    model.validate()?;
    let jobs = enumerate_plan(bank, grid)?;
    let fresh = RunManifest::new(bank, model, grid, jobs.len());
    fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let records_path = out_dir.join(RECORDS_FILE);
    let exists = manifest_path.exists() || records_path.exists();
    if exists && !resume {
        return Err(RunError::AlreadyExists(out_dir.to_path_buf()));
    }

    let manifest = if manifest_path.exists() {
        let old = RunManifest::load(&manifest_path)?;
        if old.run_id != fresh.run_id {
            return Err(RunError::RunIdMismatch {
                dir: out_dir.to_path_buf(),
                expected: fresh.run_id,
                found: old.run_id,
            });
        }
        old
    } else {
        write_json_atomic(&manifest_path, &fresh)?;
        fresh
    };

    let plan_path = out_dir.join(PLAN_FILE);
    let f = File::create(&plan_path).map_err(io_at(&plan_path))?;
    let mut w = BufWriter::new(f);
    write_plan_jsonl(&jobs, &mut w).map_err(io_at(&plan_path))?;
    w.flush().map_err(io_at(&plan_path))?;

    let mut completed = HashSet::new();
    if records_path.exists() {
        repair_log(&records_path)?;
        let planned: HashSet<&str> = jobs.iter().map(|j| j.job_id.as_str()).collect();
        for r in read_records(&records_path)? {
            if !planned.contains(r.job_id.as_str()) {
                return Err(RunError::BadArtifact {
                    path: records_path.clone(),
                    reason: format!("record {} is not in this run's plan", r.job_id),
                });
            }
            completed.insert(r.job_id);
        }
    }
    Ok(PreparedRun { manifest, jobs, completed, out_dir: out_dir.to_path_buf() })
}

/// Drops a trailing partial line left by an interrupted writer. Returns the
/// number of bytes removed.
pub fn repair_log(path: &Path) -> Result<u64, RunError> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(0);
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(io_at(path))?;
    f.set_len(keep as u64).map_err(io_at(path))?;
    f.sync_all().map_err(io_at(path))?;
    let cut = (bytes.len() - keep) as u64;
    log::warn!("{}: dropped {cut} bytes of a torn final record", path.display());
    Ok(cut)
}

pub fn read_records(path: &Path) -> Result<Vec<ResponseRecord>, RunError> {
    let f = File::open(path).map_err(io_at(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_at(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| RunError::CorruptLog {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_at(&tmp))?;
    fs::rename(&tmp, path).map_err(io_at(path))
}

/// Scored profiles together with the runs they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub run_ids: Vec<String>,
    pub bank_digest: String,
    pub profiles: Vec<TraitProfile>,
}

impl ProfileSet {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text).map_err(|e| RunError::BadArtifact { path: path.to_path_buf(), reason: e.to_string() })
    }

    /// Concatenates sets that share a bank digest.
    pub fn merge(sets: Vec<ProfileSet>) -> Result<ProfileSet, RunError> {
        let mut iter = sets.into_iter();
        let mut out = iter.next().ok_or_else(|| RunError::BadArtifact {
            path: PathBuf::new(),
            reason: "no profile inputs".into(),
        })?;
        for s in iter {
            if s.bank_digest != out.bank_digest {
                return Err(RunError::MixedBank(out.bank_digest, s.bank_digest));
            }
            for id in s.run_ids {
                if !out.run_ids.contains(&id) {
                    out.run_ids.push(id);
                }
            }
            out.profiles.extend(s.profiles);
        }
        Ok(out)
    }
}

/// Scores a record log against its plan. Missing or failed jobs count toward
/// `n_missing`; a trait with no usable answer is left out of its profile.
pub fn build_profiles(
    bank: &ItemBank,
    manifest: &RunManifest,
    jobs: &[PromptJob],
    records: &[ResponseRecord],
) -> Result<ProfileSet, RunError> {
    let mut by_id: HashMap<&str, &ResponseRecord> = HashMap::new();
    for r in records {
        by_id.entry(r.job_id.as_str()).or_insert(r);
    }
    let mut grouped: BTreeMap<Condition, BTreeMap<TraitId, Vec<Option<u8>>>> = BTreeMap::new();
    let mut order: Vec<Condition> = Vec::new();
    for job in jobs {
        if !grouped.contains_key(&job.condition) {
            order.push(job.condition);
        }
        let score = by_id.get(job.job_id.as_str()).and_then(|r| score_record(bank, job, r));
        grouped.entry(job.condition).or_default().entry(job.observed_trait).or_default().push(score);
    }
    let mut profiles = Vec::new();
    for cond in order {
        let mut scores = BTreeMap::new();
        for (t, responses) in &grouped[&cond] {
            match trait_score(*t, responses) {
                Ok(s) => {
                    scores.insert(*t, s);
                }
                Err(ScoreError::NoData(_)) => log::warn!("{}: no usable answers for {t}", cond.label()),
                Err(e) => return Err(e.into()),
            }
        }
        profiles.push(TraitProfile {
            model_id: manifest.model.model_id.clone(),
            condition: cond,
            scores,
            manifest_ref: manifest.run_id.clone(),
        });
    }
    Ok(ProfileSet { run_ids: vec![manifest.run_id.clone()], bank_digest: manifest.bank_digest.clone(), profiles })
}

fn score_record(bank: &ItemBank, job: &PromptJob, rec: &ResponseRecord) -> Option<u8> {
    match job.condition.kind {
        ConditionKind::MpiNeutral | ConditionKind::P2Induced => {
            let item = bank.item(job.item_id.as_deref()?)?;
            Some(key_score(rec.letter()?, item.key))
        }
        ConditionKind::SacNeutral | ConditionKind::SacInduced => rec.digit(),
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub summary: BatchSummary,
    pub profiles: ProfileSet,
    /// Backend calls made during this execution, retries included.
    pub backend_calls: u64,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// Jobs in the log without a usable answer.
    pub fn missing(&self) -> usize {
        self.profiles
            .profiles
            .iter()
            .flat_map(|p| p.scores.values())
            .map(|s| s.n_missing)
            .sum::<usize>()
            + self.profiles.profiles.iter().map(|p| 16 - p.scores.len()).sum::<usize>()
    }
}

pub fn open_gateway(
    bank: Arc<ItemBank>,
    model: &ModelSpec,
    cache_dir: Option<&Path>,
    retry: RetryPolicy,
) -> Result<Gateway, RunError> {
    let digest = bank.digest().to_string();
    let backend = backend_for(model, bank)?;
    let mut gw = Gateway::new(model.clone(), backend, &digest).with_policy(retry);
    if let Some(dir) = cache_dir {
        gw = gw.with_cache(ResponseCache::open(dir).map_err(io_at(dir))?);
    }
    Ok(gw)
}

/// Plans, executes and scores one run end to end.
pub fn execute_run(
    bank: Arc<ItemBank>,
    model: &ModelSpec,
    grid: &PlanOptions,
    settings: &RunSettings,
) -> Result<RunOutcome, RunError> {
    let prepared = prepare_run(&bank, model, grid, &settings.out_dir, settings.resume)?;
    let gateway = open_gateway(bank.clone(), model, settings.cache_dir.as_deref(), settings.retry.clone())?;
    execute_prepared(&bank, &gateway, prepared, settings.concurrency)
}

pub fn execute_prepared(
    bank: &ItemBank,
    gateway: &Gateway,
    prepared: PreparedRun,
    concurrency: usize,
) -> Result<RunOutcome, RunError> {
    let records_path = prepared.out_dir.join(RECORDS_FILE);
    let sink = JsonlSink::append_to(&records_path).map_err(io_at(&records_path))?;
    log::info!(
        "run {}: {} jobs, {} already done",
        prepared.manifest.run_id,
        prepared.jobs.len(),
        prepared.completed.len()
    );
    let summary =
        run_batch(gateway, &prepared.jobs, &sink, concurrency, &prepared.completed).map_err(io_at(&records_path))?;
    drop(sink);
    let records = read_records(&records_path)?;
    let profiles = build_profiles(bank, &prepared.manifest, &prepared.jobs, &records)?;
    write_json_atomic(&prepared.out_dir.join(PROFILES_FILE), &profiles)?;
    Ok(RunOutcome {
        manifest: prepared.manifest,
        summary,
        profiles,
        backend_calls: gateway.backend_calls(),
        out_dir: prepared.out_dir,
    })
}
