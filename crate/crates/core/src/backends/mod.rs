//! Chat-completion clients for every model role.
//!
//! A [`ModelClient`] wraps one configured endpoint. It owns the endpoint's
//! rate limiter and in-flight cap, applies the per-attempt timeout, and
//! retries transport failures, timeouts, 5xx and 429 answers with
//! exponential backoff. The actual request goes through a [`Transport`]:
//! HTTP for real servers, an in-process rule set for `mock:` endpoints, or
//! anything a test wants to put in between.
//!
//! Message content is never logged unless [`set_log_content`] enabled it.

pub mod http;
pub mod limiter;
pub mod mock;
pub mod recording;
pub mod wire;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::config::{EndpointTarget, ModelEndpoint, MAX_BACKOFF_MS};
use crate::prompts::RenderedPrompt;
use limiter::RateLimiter;
use wire::{WireChatRequest, WireChatResponse, WireMessage};

pub const TEMPERATURE_GENERATE: f64 = 0.7;
pub const TEMPERATURE_TRANSFORM: f64 = 0.7;
pub const TEMPERATURE_ANSWER: f64 = 0.7;
pub const TEMPERATURE_RESTORE: f64 = 0.0;
pub const TEMPERATURE_JUDGE: f64 = 0.0;

static LOG_CONTENT: AtomicBool = AtomicBool::new(false);

/// Allow request and response text to appear in debug logs.
pub fn set_log_content(enabled: bool) {
    LOG_CONTENT.store(enabled, Ordering::Relaxed);
}

pub fn log_content() -> bool {
    LOG_CONTENT.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "system" => Some(MessageRole::System),
            "user" => Some(MessageRole::User),
            "assistant" => Some(MessageRole::Assistant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Overrides the endpoint's configured model name.
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            model_name: None,
            temperature: None,
            max_tokens: None,
        }
    }

    pub fn from_prompt(prompt: RenderedPrompt) -> Self {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = prompt.system {
            messages.push(ChatMessage::system(system));
        }
        messages.push(ChatMessage::user(prompt.user));
        Self::new(messages)
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = Some(t);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.messages.iter().any(|m| m.role == MessageRole::User) {
            return Err(BackendError::InvalidRequest("no user message".into()));
        }
        if let Some(i) = self.messages.iter().position(|m| m.content.is_empty()) {
            return Err(BackendError::InvalidRequest(format!("message {i} has empty content")));
        }
        if let Some(t) = self.temperature {
            if !(t >= 0.0) {
                return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
            }
        }
        if self.max_tokens == Some(0) {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// Outcome of a single request attempt.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AttemptError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("timed out")]
    Timeout,
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("unparseable response: {0}")]
    Protocol(String),
}

impl AttemptError {
    pub fn is_retryable(&self) -> bool {
        match self {
            AttemptError::Transport(_) | AttemptError::Timeout => true,
            AttemptError::Status { code, .. } => *code >= 500 || *code == 429,
            AttemptError::Protocol(_) => false,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("backend {endpoint} unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable {
        endpoint: String,
        attempts: u32,
        last_error: String,
    },
    #[error("backend {endpoint} rejected the request with HTTP {status}: {body}")]
    Rejected {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("backend {endpoint} sent an unusable response: {reason}")]
    Protocol { endpoint: String, reason: String },
    #[error("rate limiter for {endpoint} is saturated; retry after {retry_after_ms} ms")]
    BackPressure { endpoint: String, retry_after_ms: u64 },
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn attempts(&self) -> Option<u32> {
        match self {
            BackendError::Unavailable { attempts, .. } => Some(*attempts),
            _ => None,
        }
    }
}

/// One request/response exchange in wire format.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(&self, body: &WireChatRequest) -> Result<WireChatResponse, AttemptError>;

    /// Where requests go, for logs. Must not contain credentials.
    fn describe(&self) -> String;
}

pub struct ModelClient {
    endpoint: ModelEndpoint,
    transport: Arc<dyn Transport>,
    limiter: RateLimiter,
    permits: Semaphore,
}

impl std::fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelClient")
            .field("endpoint", &self.endpoint.label())
            .field("transport", &self.transport.describe())
            .finish()
    }
}

impl ModelClient {
    /// Build the transport the endpoint's target calls for.
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, BackendError> {
        let transport: Arc<dyn Transport> = match &endpoint.target {
            EndpointTarget::Http(_) => Arc::new(http::HttpTransport::new(&endpoint)?),
            EndpointTarget::Mock(rules) => Arc::new(mock::MockTransport::new(*rules)),
        };
        Ok(Self::with_transport(endpoint, transport))
    }

    pub fn with_transport(endpoint: ModelEndpoint, transport: Arc<dyn Transport>) -> Self {
        let limiter = RateLimiter::new(
            endpoint.requests_per_minute,
            Duration::from_millis(endpoint.max_queue_ms),
        );
        let permits = Semaphore::new(endpoint.max_concurrency.max(1) as usize);
        Self {
            endpoint,
            transport,
            limiter,
            permits,
        }
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn wire_request(&self, req: &ChatRequest) -> WireChatRequest {
        WireChatRequest {
            model: req
                .model_name
                .clone()
                .unwrap_or_else(|| self.endpoint.model_name.clone()),
            messages: req
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role.as_str().to_string(),
                    content: m.content.clone(),
                })
                .collect(),
            temperature: self.endpoint.temperature.or(req.temperature),
            max_tokens: req.max_tokens.or(self.endpoint.max_tokens),
            stream: false,
        }
    }

    fn backoff(&self, failed_attempts: u32) -> Duration {
        let factor = 1u64 << failed_attempts.saturating_sub(1).min(20);
        Duration::from_millis(self.endpoint.backoff_ms.saturating_mul(factor).min(MAX_BACKOFF_MS))
    }

    /// Send one chat request, honoring rate limit, concurrency cap and
    /// retry policy.
    pub async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        req.validate()?;
        let body = self.wire_request(req);
        let label = self.endpoint.label();
        let started = Instant::now();
        let max_attempts = self.endpoint.max_retries + 1;
        let timeout = Duration::from_millis(self.endpoint.timeout_ms);
        let mut last_error = String::new();

        for attempt in 1..=max_attempts {
            if attempt > 1 {
                tokio::time::sleep(self.backoff(attempt - 1)).await;
            }
            self.limiter.acquire().await.map_err(|s| BackendError::BackPressure {
                endpoint: label.clone(),
                retry_after_ms: s.retry_after.as_millis() as u64,
            })?;
            let outcome = {
                let _permit = self.permits.acquire().await.expect("semaphore never closed");
                tracing::debug!(endpoint = %label, attempt, messages = body.messages.len(), "chat request");
                if log_content() {
                    tracing::debug!(endpoint = %label, body = ?body.messages, "chat request content");
                }
                match tokio::time::timeout(timeout, self.transport.send(&body)).await {
                    Ok(r) => r,
                    Err(_) => Err(AttemptError::Timeout),
                }
            };
            match outcome {
                Ok(resp) => {
                    let r = self.interpret(resp, attempt, started)?;
                    if log_content() {
                        tracing::debug!(endpoint = %label, content = %r.content, "chat response content");
                    }
                    return Ok(r);
                }
                Err(e) => {
                    tracing::warn!(endpoint = %label, attempt, error = %e, "chat attempt failed");
                    match &e {
                        AttemptError::Protocol(reason) => {
                            return Err(BackendError::Protocol {
                                endpoint: label,
                                reason: reason.clone(),
                            })
                        }
                        AttemptError::Status { code, body } if !e.is_retryable() => {
                            return Err(BackendError::Rejected {
                                endpoint: label,
                                status: *code,
                                body: body.clone(),
                            })
                        }
                        _ => last_error = e.to_string(),
                    }
                }
            }
        }
        Err(BackendError::Unavailable {
            endpoint: label,
            attempts: max_attempts,
            last_error,
        })
    }

    fn interpret(
        &self,
        resp: WireChatResponse,
        attempts: u32,
        started: Instant,
    ) -> Result<ChatResponse, BackendError> {
        let protocol = |reason: &str| BackendError::Protocol {
            endpoint: self.endpoint.label(),
            reason: reason.to_string(),
        };
        let choice = resp.choices.into_iter().next().ok_or_else(|| protocol("no choices"))?;
        let finish_reason = choice.finish_reason.unwrap_or_else(|| "stop".into());
        let content = match choice.message.content {
            Some(c) => c,
            None if finish_reason == "stop" => return Err(protocol("finish_reason stop without content")),
            None => String::new(),
        };
        let usage = resp.usage.unwrap_or_default();
        Ok(ChatResponse {
            content,
            finish_reason,
            usage: Usage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
            latency_ms: started.elapsed().as_millis() as u64,
            attempts,
        })
    }

    /// Convenience wrapper: send a rendered prompt at the given temperature.
    pub async fn complete_prompt(
        &self,
        prompt: RenderedPrompt,
        temperature: f64,
    ) -> Result<ChatResponse, BackendError> {
        self.complete(&ChatRequest::from_prompt(prompt).with_temperature(temperature))
            .await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Role;
    use mock::RuleSet;
    use std::sync::atomic::AtomicU32;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<WireChatResponse, AttemptError>>>,
        calls: AtomicU32,
    }

    #[async_trait]
    impl Transport for Scripted {
        async fn send(&self, _: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().remove(0)
        }
        fn describe(&self) -> String {
            "scripted".into()
        }
    }

    fn scripted(replies: Vec<Result<WireChatResponse, AttemptError>>) -> Arc<Scripted> {
        Arc::new(Scripted {
            replies: Mutex::new(replies),
            calls: AtomicU32::new(0),
        })
    }

    fn ok(text: &str) -> Result<WireChatResponse, AttemptError> {
        Ok(WireChatResponse::single("x", "m", text, Default::default()))
    }

    fn endpoint() -> ModelEndpoint {
        ModelEndpoint::mock(Role::Mock, RuleSet::Echo)
    }

    #[tokio::test]
    async fn echo_mock() {
        let client = ModelClient::new(endpoint()).unwrap();
        let r = client.complete(&ChatRequest::new(vec![ChatMessage::user("hello")])).await.unwrap();
        assert_eq!(r.content, "hello");
        assert_eq!(r.finish_reason, "stop");
        assert_eq!(r.attempts, 1);
    }

    #[tokio::test]
    async fn request_validation() {
        let client = ModelClient::new(endpoint()).unwrap();
        let no_user = ChatRequest::new(vec![ChatMessage::system("x")]);
        assert!(matches!(client.complete(&no_user).await, Err(BackendError::InvalidRequest(_))));
        let empty = ChatRequest::new(vec![ChatMessage::user("")]);
        assert!(matches!(client.complete(&empty).await, Err(BackendError::InvalidRequest(_))));
    }

    #[tokio::test(start_paused = true)]
    async fn retries_then_succeeds() {
        let t = scripted(vec![
            Err(AttemptError::Status { code: 503, body: String::new() }),
            Err(AttemptError::Timeout),
            ok("fine"),
        ]);
        let client = ModelClient::with_transport(endpoint(), t.clone());
        let r = client.complete(&ChatRequest::new(vec![ChatMessage::user("q")])).await.unwrap();
        assert_eq!((r.content.as_str(), r.attempts), ("fine", 3));
    }

    #[tokio::test(start_paused = true)]
    async fn client_errors_are_not_retried() {
        let t = scripted(vec![Err(AttemptError::Status { code: 400, body: "bad".into() }), ok("x")]);
        let client = ModelClient::with_transport(endpoint(), t.clone());
        let err = client.complete(&ChatRequest::new(vec![ChatMessage::user("q")])).await.unwrap_err();
        assert!(matches!(err, BackendError::Rejected { status: 400, .. }));
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[tokio::test(start_paused = true)]
    async fn protocol_errors_are_distinct() {
        let empty = WireChatResponse {
            choices: vec![],
            ..WireChatResponse::single("x", "m", "", Default::default())
        };
        let client = ModelClient::with_transport(endpoint(), scripted(vec![Ok(empty)]));
        let err = client.complete(&ChatRequest::new(vec![ChatMessage::user("q")])).await.unwrap_err();
        assert!(matches!(err, BackendError::Protocol { .. }));
    }

    #[tokio::test(start_paused = true)]
    async fn saturation_is_back_pressure_not_unavailability() {
        let mut ep = endpoint();
        ep.requests_per_minute = 1;
        ep.max_queue_ms = 1000;
        let client = ModelClient::new(ep).unwrap();
        let req = ChatRequest::new(vec![ChatMessage::user("q")]);
        client.complete(&req).await.unwrap();
        let err = client.complete(&req).await.unwrap_err();
        assert!(matches!(err, BackendError::BackPressure { .. }));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let mut ep = endpoint();
        ep.backoff_ms = 250;
        let c = ModelClient::new(ep).unwrap();
        let ms: Vec<u128> = (1..=7).map(|n| c.backoff(n).as_millis()).collect();
        assert_eq!(ms, vec![250, 500, 1000, 2000, 4000, 8000, 8000]);
    }

    #[test]
    fn endpoint_temperature_wins() {
        let mut ep = endpoint();
        ep.temperature = Some(0.2);
        let c = ModelClient::new(ep).unwrap();
        let w = c.wire_request(&ChatRequest::new(vec![ChatMessage::user("q")]).with_temperature(0.7));
        assert_eq!(w.temperature, Some(0.2));
        assert_eq!(w.model, "mock-echo");
    }
}
