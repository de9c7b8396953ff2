//! Executing prompt jobs against chat backends with retry, rate limiting and
//! a content-addressed cache.

mod backend;
mod batch;
mod cache;

pub use backend::{backend_for, Backend, BackendError, HttpBackend, SyntheticBackend};
pub use batch::{execute_job, run_batch, BatchSummary, JsonlSink, MemorySink, RecordSink};
pub use cache::{CacheKey, ResponseCache};

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prompt::PromptJob;

/// Wire dialect of a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestStyle {
    OpenaiChat,
    AnthropicMessages,
    /// In-process synthetic respondent; endpoint is `synthetic:///path/to/ground_truth.json`,
    /// optionally with `?delay_ms=N` to slow every reply.
    Synthetic,
}

impl RequestStyle {
    pub fn code(self) -> &'static str {
        match self {
            RequestStyle::OpenaiChat => "openai-chat",
            RequestStyle::AnthropicMessages => "anthropic-messages",
            RequestStyle::Synthetic => "synthetic",
        }
    }
}

fn default_max_tokens() -> u32 {
    16
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model_id: String,
    pub endpoint: String,
    /// Name of the environment variable holding the API key. Never the key itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    pub request_style: RequestStyle,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read model config: {0}")]
    Io(#[from] std::io::Error),
    #[error("model config is malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model {model_id}: {reason}")]
    Invalid { model_id: String, reason: String },
    #[error("model {0} is not in the config")]
    UnknownModel(String),
    #[error("model config lists no models")]
    Empty,
}

impl ModelSpec {
    pub fn synthetic(model_id: &str, ground_truth: &Path) -> Self {
        ModelSpec {
            model_id: model_id.to_string(),
            endpoint: format!("synthetic://{}", ground_truth.display()),
            auth_env_var: None,
            request_style: RequestStyle::Synthetic,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::Invalid { model_id: self.model_id.clone(), reason };
        if self.model_id.trim().is_empty() {
            return Err(bad("model_id is empty".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(bad(format!("temperature {} must be finite and ≥ 0", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(bad("max_tokens must be positive".into()));
        }
        if self.timeout_secs == 0 {
            return Err(bad("timeout_secs must be positive".into()));
        }
        let url = url::Url::parse(&self.endpoint)
            .map_err(|e| bad(format!("endpoint {:?} is not an absolute URL: {e}", self.endpoint)))?;
        match (self.request_style, url.scheme()) {
            (RequestStyle::Synthetic, "synthetic") => {
                if url.path().is_empty() || url.path() == "/" {
                    return Err(bad("synthetic endpoint needs a ground-truth file path".into()));
                }
            }
            (RequestStyle::Synthetic, s) => {
                return Err(bad(format!("synthetic style needs a synthetic:// endpoint, got {s}://")))
            }
            (_, "http" | "https") => {}
            (_, s) => return Err(bad(format!("unsupported endpoint scheme {s}://"))),
        }
        if let Some(var) = &self.auth_env_var {
            if var.is_empty() || var.contains('=') {
                return Err(bad(format!("auth_env_var {var:?} is not a variable name")));
            }
        }
        Ok(())
    }

    /// Ground-truth path of a synthetic endpoint.
    pub fn synthetic_path(&self) -> Option<std::path::PathBuf> {
        let url = url::Url::parse(&self.endpoint).ok()?;
        (url.scheme() == "synthetic").then(|| std::path::PathBuf::from(url.path()))
    }

    pub fn synthetic_delay_ms(&self) -> Option<u64> {
        let url = url::Url::parse(&self.endpoint).ok()?;
        let ms = url.query_pairs().find(|(k, _)| k == "delay_ms")?.1.parse().ok();
        ms
    }
}

/// Reads a JSON list of model specs and validates each one.
pub fn load_model_config(path: impl AsRef<Path>) -> Result<Vec<ModelSpec>, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_model_config(&text)
}

pub fn parse_model_config(text: &str) -> Result<Vec<ModelSpec>, ConfigError> {
    let specs: Vec<ModelSpec> = serde_json::from_str(text)?;
    if specs.is_empty() {
        return Err(ConfigError::Empty);
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &specs {
        s.validate()?;
        if !seen.insert(s.model_id.clone()) {
            return Err(ConfigError::Invalid { model_id: s.model_id.clone(), reason: "duplicate model_id".into() });
        }
    }
    Ok(specs)
}

/// Picks one model: by id when given, otherwise the only one configured.
pub fn select_model(specs: &[ModelSpec], model_id: Option<&str>) -> Result<ModelSpec, ConfigError> {
    match model_id {
        Some(id) => specs
            .iter()
            .find(|s| s.model_id == id)
            .cloned()
            .ok_or_else(|| ConfigError::UnknownModel(id.to_string())),
        None if specs.len() == 1 => Ok(specs[0].clone()),
        None => Err(ConfigError::Invalid {
            model_id: specs.iter().map(|s| s.model_id.as_str()).collect::<Vec<_>>().join(","),
            reason: "several models configured; pick one with --model".into(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub prompt_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn for_job(spec: &ModelSpec, job: &PromptJob) -> Self {
        ChatRequest {
            model_id: spec.model_id.clone(),
            prompt_text: job.prompt_text.clone(),
            temperature: spec.temperature,
            max_tokens: spec.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub raw_text: String,
    pub latency_ms: u64,
    /// Backend attempts made; 0 when served from cache.
    pub attempt_count: u32,
    pub backend_tag: String,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    /// Minimum spacing between request starts across all workers.
    pub min_interval: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            min_interval: Duration::ZERO,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO, min_interval: Duration::ZERO }
    }

    /// Sleep before attempt `n + 1` after `n` failures.
    pub fn backoff(&self, failures: u32) -> Duration {
        let factor = 1u32.checked_shl(failures.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: BackendError },
    #[error(transparent)]
    Backend(BackendError),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl GatewayError {
    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::Exhausted { attempts, .. } => *attempts,
            GatewayError::Backend(_) => 1,
            GatewayError::Cache(_) => 0,
        }
    }
}

pub struct Gateway {
    spec: ModelSpec,
    backend: Box<dyn Backend>,
    cache: Option<ResponseCache>,
    policy: RetryPolicy,
    bank_digest: String,
    backend_calls: AtomicU64,
    next_slot: Mutex<Option<Instant>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("model_id", &self.spec.model_id)
            .field("backend", &self.backend.tag())
            .field("cache", &self.cache.as_ref().map(|c| c.dir().to_path_buf()))
            .finish()
    }
}

impl Gateway {
    pub fn new(spec: ModelSpec, backend: Box<dyn Backend>, bank_digest: &str) -> Self {
        Gateway {
            spec,
            backend,
            cache: None,
            policy: RetryPolicy::default(),
            bank_digest: bank_digest.to_string(),
            backend_calls: AtomicU64::new(0),
            next_slot: Mutex::new(None),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    /// Calls that actually reached the backend, retries included.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, job: &PromptJob, req: &ChatRequest) -> CacheKey {
        CacheKey::new(&req.model_id, &req.prompt_text, req.temperature, &self.bank_digest, job.repeat)
    }

    pub fn complete(&self, job: &PromptJob, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = self.cache_key(job, req);
        self.complete_keyed(job, req, &key)
    }

    /// Second opinion after an ambiguous reply. Stored under its own key so a
    /// warmed cache replays it too.
    pub fn reask(&self, job: &PromptJob, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = self.cache_key(job, req).reask();
        self.complete_keyed(job, req, &key)
    }

    fn complete_keyed(&self, job: &PromptJob, req: &ChatRequest, key: &CacheKey) -> Result<ChatResponse, GatewayError> {
        if let Some(cache) = &self.cache {
            if let Some(raw_text) = cache.get(key)? {
                return Ok(ChatResponse {
                    raw_text,
                    latency_ms: 0,
                    attempt_count: 0,
                    backend_tag: self.backend.tag().to_string(),
                    from_cache: true,
                });
            }
        }
        let resp = self.call_with_retry(job, req)?;
        if let Some(cache) = &self.cache {
            cache.put(key, &resp.raw_text)?;
        }
        Ok(resp)
    }

    fn call_with_retry(&self, job: &PromptJob, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let max = self.policy.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.wait_for_slot();
            let started = Instant::now();
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.send(job, req) {
                Ok(raw_text) => {
                    return Ok(ChatResponse {
                        raw_text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt_count: attempt,
                        backend_tag: self.backend.tag().to_string(),
                        from_cache: false,
                    })
                }
                Err(e) if e.is_transient() && attempt < max => {
                    log::warn!("job {}: attempt {attempt} failed: {e}", job.job_id);
                    thread::sleep(self.policy.backoff(attempt));
                }
                Err(e) if e.is_transient() => return Err(GatewayError::Exhausted { attempts: attempt, last: e }),
                Err(e) => return Err(GatewayError::Backend(e)),
            }
        }
    }

    fn wait_for_slot(&self) {
        if self.policy.min_interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let start = next.map_or(now, |n| n.max(now));
            *next = Some(start + self.policy.min_interval);
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = r#"[{"model_id":"m","endpoint":"https://api.example.com/v1/chat/completions",
            "auth_env_var":"OPENAI_API_KEY","request_style":"openai-chat"}]"#;
        let specs = parse_model_config(ok).unwrap();
        assert_eq!(specs[0].temperature, 0.0);
        assert_eq!(specs[0].max_tokens, 16);

        let rel = r#"[{"model_id":"m","endpoint":"/v1/chat","request_style":"openai-chat"}]"#;
        assert!(matches!(parse_model_config(rel), Err(ConfigError::Invalid { .. })));
        let neg = r#"[{"model_id":"m","endpoint":"http://x/","request_style":"openai-chat","temperature":-1}]"#;
        assert!(parse_model_config(neg).is_err());
        let mixed = r#"[{"model_id":"m","endpoint":"http://x/","request_style":"synthetic"}]"#;
        assert!(parse_model_config(mixed).is_err());
        let key = r#"[{"model_id":"m","endpoint":"http://x/","request_style":"openai-chat","api_key":"sk"}]"#;
        assert!(matches!(parse_model_config(key), Err(ConfigError::Json(_))));
        assert!(matches!(parse_model_config("[]"), Err(ConfigError::Empty)));
    }

    #[test]
    fn synthetic_spec_round_trips_its_path() {
        let spec = ModelSpec::synthetic("mock", Path::new("/tmp/gt.json"));
        spec.validate().unwrap();
        assert_eq!(spec.synthetic_path().unwrap(), Path::new("/tmp/gt.json"));
        assert_eq!(spec.synthetic_delay_ms(), None);
        let slow = ModelSpec { endpoint: "synthetic:///tmp/gt.json?delay_ms=25".into(), ..spec };
        slow.validate().unwrap();
        assert_eq!(slow.synthetic_path().unwrap(), Path::new("/tmp/gt.json"));
        assert_eq!(slow.synthetic_delay_ms(), Some(25));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(700),
            min_interval: Duration::ZERO,
        };
        let got: Vec<u128> = (1..=5).map(|n| p.backoff(n).as_millis()).collect();
        assert_eq!(got, vec![100, 200, 400, 700, 700]);
        assert_eq!(p.backoff(60).as_millis(), 700);
    }
}
