//! HTTP chat-completion backend.
//!
//! Request body: `{"model", "messages": [system, user], "temperature": 0}`.
//! The completion text is read from a configurable JSON pointer. Transport
//! failures, 408, 429 and 5xx are retried with exponential backoff; any other
//! status and any unusable body fail immediately.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AuditLog, Backend, PromptRequest, ProviderError, ProviderExchange, ProviderKind};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "TRAJKG_API_KEY";

pub const DEFAULT_POINTER: &str = "/choices/0/message/content";

const SYSTEM_MESSAGE: &str =
    "You build course knowledge graphs. Follow the requested output format exactly.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Moves one JSON request to the endpoint. `Err` means the request never
/// produced an HTTP status.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &str, bearer: Option<&str>) -> Result<HttpReply, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base × 2^retry.
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << retry.min(16)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub response_pointer: String,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: "gpt-4o-mini".to_string(),
            response_pointer: DEFAULT_POINTER.to_string(),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            timeout_secs: 120,
        }
    }
}

/// Blocking transport over `ureq`.
#[derive(Debug)]
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, body: &str, bearer: Option<&str>) -> Result<HttpReply, String> {
        let mut request = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(key) = bearer {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    cap: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(cap: usize) -> Self {
        InFlight {
            cap: cap.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("in-flight lock poisoned");
        while *used >= self.cap {
            used = self.freed.wait(used).expect("in-flight lock poisoned");
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().expect("in-flight lock poisoned");
        *used -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    transport: Box<dyn Transport>,
    in_flight: InFlight,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("has_api_key", &self.api_key.is_some())
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(
        config: RemoteConfig,
        api_key: Option<String>,
        transport: Box<dyn Transport>,
    ) -> Result<Self, ProviderError> {
        if config.endpoint.trim().is_empty() {
            return Err(ProviderError::Config(
                "provider.endpoint is not set".to_string(),
            ));
        }
        if !config.response_pointer.is_empty() && !config.response_pointer.starts_with('/') {
            return Err(ProviderError::Config(format!(
                "response pointer {:?} must start with '/'",
                config.response_pointer
            )));
        }
        let in_flight = InFlight::new(config.max_in_flight);
        Ok(RemoteBackend {
            config,
            api_key,
            transport,
            in_flight,
        })
    }

    /// HTTP backend whose credential comes from `TRAJKG_API_KEY`.
    pub fn from_env(config: RemoteConfig) -> Result<Self, ProviderError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs));
        Self::new(config, api_key, Box::new(transport))
    }

    pub fn request_body(&self, rendered: &str) -> String {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": rendered},
            ],
            "temperature": 0,
        })
        .to_string()
    }

    fn extract(&self, body: &str) -> Result<String, ProviderError> {
        let value: serde_json::Value = serde_json::from_str(body)
            .map_err(|e| ProviderError::BadResponse(format!("not JSON: {e}")))?;
        match value.pointer(&self.config.response_pointer) {
            Some(serde_json::Value::String(text)) => Ok(text.clone()),
            Some(_) => Err(ProviderError::BadResponse(format!(
                "{} is not a string",
                self.config.response_pointer
            ))),
            None => Err(ProviderError::BadResponse(format!(
                "no completion at {}",
                self.config.response_pointer
            ))),
        }
    }

    fn attempt(
        &self,
        body: &str,
        request: &PromptRequest<'_>,
        audit: &AuditLog,
    ) -> Result<String, ProviderError> {
        let _permit = self.in_flight.acquire();
        let start = Instant::now();
        let outcome =
            self.transport
                .post_json(&self.config.endpoint, body, self.api_key.as_deref());
        let latency_ms = super::elapsed_ms(start);
        let raw_response = match &outcome {
            Ok(reply) => reply.body.clone(),
            Err(message) => format!("transport error: {message}"),
        };
        audit.record(ProviderExchange {
            template_id: request.template_id,
            rendered_prompt: request.rendered.to_string(),
            raw_response,
            latency_ms,
            provider_kind: ProviderKind::Remote,
        });

        let reply = outcome.map_err(ProviderError::Transport)?;
        match reply.status {
            200..=299 => self.extract(&reply.body),
            408 | 429 | 500..=599 => {
                Err(ProviderError::Transport(format!("HTTP {}", reply.status)))
            }
            status => Err(ProviderError::Rejected {
                status,
                body: reply.body,
            }),
        }
    }
}

impl Backend for RemoteBackend {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn respond(
        &self,
        request: &PromptRequest<'_>,
        audit: &AuditLog,
    ) -> Result<String, ProviderError> {
        let body = self.request_body(request.rendered);
        let mut retry = 0;
        loop {
            match self.attempt(&body, request, audit) {
                Err(err) if err.is_retryable() => {
                    if retry >= self.config.retry.max_retries {
                        return Err(ProviderError::Exhausted {
                            attempts: retry + 1,
                            last: err.to_string(),
                        });
                    }
                    tracing::warn!(retry, error = %err, "provider call failed, backing off");
                    thread::sleep(self.config.retry.delay(retry));
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}
