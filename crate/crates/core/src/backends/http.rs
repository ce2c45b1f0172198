//! Blocking HTTP transport for the `/v1/*` JSON protocol.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value};

use super::{error_from_wire, BackendError, Endpoint, Transport, WireErrorBody};

/// Bounded exponential backoff, applied only to retryable failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): `base * 2^retry`.
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << retry.min(16))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    /// Per-endpoint base URL overrides, e.g. a hosted LLM for chat only.
    pub endpoint_urls: BTreeMap<Endpoint, String>,
    pub bearer_token: Option<String>,
    /// Per-endpoint bearer tokens, overriding `bearer_token`.
    pub endpoint_tokens: BTreeMap<Endpoint, String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// When set, chat goes to `<base>/v1/chat/completions` in OpenAI format
    /// with this model name.
    pub openai_chat_model: Option<String>,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            endpoint_urls: BTreeMap::new(),
            bearer_token: None,
            endpoint_tokens: BTreeMap::new(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            openai_chat_model: None,
        }
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    config: HttpConfig,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }

    fn url(&self, endpoint: Endpoint) -> String {
        let base = self.config.endpoint_urls.get(&endpoint).unwrap_or(&self.config.base_url);
        let path = match (endpoint, &self.config.openai_chat_model) {
            (Endpoint::Chat, Some(_)) => "/v1/chat/completions",
            _ => endpoint.path(),
        };
        format!("{}{}", base.trim_end_matches('/'), path)
    }

    fn body(&self, endpoint: Endpoint, request: &Value) -> Value {
        match (endpoint, &self.config.openai_chat_model) {
            (Endpoint::Chat, Some(model)) => {
                let mut body = request.clone();
                body["model"] = json!(model);
                body
            }
            _ => request.clone(),
        }
    }

    fn attempt(&self, endpoint: Endpoint, url: &str, body: &str) -> Result<Value, BackendError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = self.config.endpoint_tokens.get(&endpoint).or(self.config.bearer_token.as_ref()) {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| BackendError::Transport {
            endpoint,
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Transport {
            endpoint,
            message: format!("reading body: {e}"),
            retryable: true,
        })?;
        let parsed: Option<Value> = serde_json::from_str(&text).ok();
        if let Some(err) = parsed.as_ref().and_then(|v| serde_json::from_value::<WireErrorBody>(v.clone()).ok()) {
            return Err(error_from_wire(endpoint, status, err.error));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Status {
                endpoint,
                status,
                code: "http".into(),
                message: text.chars().take(200).collect(),
            });
        }
        parsed.ok_or_else(|| BackendError::Protocol { endpoint, message: "response is not JSON".into() })
    }

    fn unwrap_openai(&self, endpoint: Endpoint, value: Value) -> Result<Value, BackendError> {
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::Protocol { endpoint, message: "no choices in completion".into() })?;
        if let Some(refusal) = choice.pointer("/message/refusal").and_then(Value::as_str) {
            return Err(BackendError::Refusal { endpoint, message: refusal.to_string() });
        }
        if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
            return Err(BackendError::Refusal { endpoint, message: "content_filter".into() });
        }
        let text = choice.pointer("/message/content").and_then(Value::as_str).unwrap_or_default();
        let model = value.get("model").and_then(Value::as_str).unwrap_or_default();
        Ok(json!({"text": text, "model": model}))
    }
}

impl Transport for HttpTransport {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        let url = self.url(endpoint);
        let body = self.body(endpoint, request).to_string();
        let attempts = self.config.retry.attempts.max(1);
        let mut retry = 0;
        loop {
            debug!("POST {url} (attempt {})", retry + 1);
            match self.attempt(endpoint, &url, &body) {
                Ok(value) if endpoint == Endpoint::Chat && self.config.openai_chat_model.is_some() => {
                    return self.unwrap_openai(endpoint, value);
                }
                Ok(value) => return Ok(value),
                Err(e) if e.is_retryable() && retry + 1 < attempts => {
                    let delay = self.config.retry.delay(retry);
                    warn!("{e}; retrying in {delay:?}");
                    thread::sleep(delay);
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
