use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, ModelSpec, RequestStyle};
use crate::bank::ItemBank;
use crate::prompt::PromptJob;
use crate::respondent::{respond, GroundTruth, RespondentError};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection failures, HTTP 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
    #[error("malformed reply: {0}")]
    Malformed(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

pub trait Backend: Send + Sync {
    fn tag(&self) -> &str;
    /// Raw reply text, untrimmed.
    fn send(&self, job: &PromptJob, req: &ChatRequest) -> Result<String, BackendError>;
}

/// Builds the backend a model spec asks for.
pub fn backend_for(spec: &ModelSpec, bank: Arc<ItemBank>) -> Result<Box<dyn Backend>, BackendError> {
    match spec.request_style {
        RequestStyle::Synthetic => {
            let path = spec
                .synthetic_path()
                .ok_or_else(|| BackendError::Fatal(format!("bad synthetic endpoint {}", spec.endpoint)))?;
            let gt = GroundTruth::load(&path).map_err(|e| BackendError::Fatal(e.to_string()))?;
            let mut backend = SyntheticBackend::new(gt, bank);
            if let Some(ms) = spec.synthetic_delay_ms() {
                backend = backend.with_delay(Duration::from_millis(ms));
            }
            Ok(Box::new(backend))
        }
        _ => Ok(Box::new(HttpBackend::new(spec)?)),
    }
}

/// Live chat endpoint over blocking HTTP.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    style: RequestStyle,
    api_key: Option<String>,
    tag: String,
}

impl HttpBackend {
    /// Reads the credential from the environment now, so a missing key fails
    /// before any job runs.
    pub fn new(spec: &ModelSpec) -> Result<Self, BackendError> {
        let api_key = match &spec.auth_env_var {
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Some(v),
                _ => return Err(BackendError::MissingCredential(var.clone())),
            },
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(spec.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            endpoint: spec.endpoint.clone(),
            style: spec.request_style,
            api_key,
            tag: format!("http:{}", spec.request_style.code()),
        })
    }

    fn body(&self, req: &ChatRequest) -> Value {
        let messages = json!([{"role": "user", "content": req.prompt_text}]);
        json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }
}

/// Pulls the reply text out of a chat-completion body.
pub fn extract_text(style: RequestStyle, body: &Value) -> Result<String, BackendError> {
    let text = match style {
        RequestStyle::OpenaiChat => body.pointer("/choices/0/message/content").and_then(Value::as_str),
        RequestStyle::AnthropicMessages => body
            .get("content")
            .and_then(Value::as_array)
            .and_then(|blocks| blocks.iter().find(|b| b.get("type").and_then(Value::as_str) == Some("text")))
            .and_then(|b| b.get("text"))
            .and_then(Value::as_str),
        RequestStyle::Synthetic => None,
    };
    text.map(str::to_string)
        .ok_or_else(|| BackendError::Malformed(format!("no reply text in {}", truncate(&body.to_string(), 200))))
}

fn truncate(s: &str, n: usize) -> String {
    match s.char_indices().nth(n) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

impl Backend for HttpBackend {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn send(&self, _job: &PromptJob, req: &ChatRequest) -> Result<String, BackendError> {
        let mut call = self.agent.post(&self.endpoint).header("content-type", "application/json");
        match (self.style, &self.api_key) {
            (RequestStyle::AnthropicMessages, key) => {
                call = call.header("anthropic-version", "2023-06-01");
                if let Some(k) = key {
                    call = call.header("x-api-key", k);
                }
            }
            (_, Some(k)) => call = call.header("authorization", &format!("Bearer {k}")),
            (_, None) => {}
        }
        let mut resp = call.send_json(self.body(req)).map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        if status == 429 || status >= 500 {
            return Err(BackendError::Transient(format!("HTTP {status}: {}", truncate(&text, 200))));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Fatal(format!("HTTP {status}: {}", truncate(&text, 200))));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        extract_text(self.style, &body)
    }
}

fn classify(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::BodyStalled => BackendError::Transient(e.to_string()),
        ureq::Error::StatusCode(s) if s == 429 || s >= 500 => BackendError::Transient(e.to_string()),
        other => BackendError::Fatal(other.to_string()),
    }
}

/// Answers from a known ground truth without touching the network.
pub struct SyntheticBackend {
    gt: GroundTruth,
    bank: Arc<ItemBank>,
    delay: Option<Duration>,
}

impl SyntheticBackend {
    pub fn new(gt: GroundTruth, bank: Arc<ItemBank>) -> Self {
        SyntheticBackend { gt, bank, delay: None }
    }

    /// Per-request sleep, for exercising interrupts and concurrency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }
}

impl Backend for SyntheticBackend {
    fn tag(&self) -> &str {
        "synthetic"
    }

    fn send(&self, job: &PromptJob, _req: &ChatRequest) -> Result<String, BackendError> {
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        respond(&self.gt, &self.bank, job).map_err(|e| match e {
            RespondentError::Io(_) | RespondentError::Json(_) | RespondentError::Invalid(_) => {
                BackendError::Fatal(e.to_string())
            }
            _ => BackendError::Malformed(e.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_text_extraction() {
        let oa = json!({"choices":[{"message":{"role":"assistant","content":" A\n"}}]});
        assert_eq!(extract_text(RequestStyle::OpenaiChat, &oa).unwrap(), " A\n");
        let an = json!({"content":[{"type":"text","text":"3"}]});
        assert_eq!(extract_text(RequestStyle::AnthropicMessages, &an).unwrap(), "3");
        assert!(matches!(
            extract_text(RequestStyle::OpenaiChat, &json!({"error":"x"})),
            Err(BackendError::Malformed(_))
        ));
    }

    #[test]
    fn missing_credential_is_reported_by_name() {
        let spec = ModelSpec {
            model_id: "m".into(),
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            auth_env_var: Some("PERSONA16_TEST_SURELY_UNSET_KEY".into()),
            request_style: RequestStyle::OpenaiChat,
            temperature: 0.0,
            max_tokens: 4,
            timeout_secs: 1,
        };
        match HttpBackend::new(&spec) {
            Err(BackendError::MissingCredential(v)) => assert_eq!(v, "PERSONA16_TEST_SURELY_UNSET_KEY"),
            other => panic!("unexpected {:?}", other.err()),
        }
    }
}
