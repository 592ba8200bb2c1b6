//! HTTP transport for chat-completions servers.

use async_trait::async_trait;

use super::wire::{WireChatRequest, WireChatResponse};
use super::{AttemptError, BackendError, Transport};
use crate::config::{EndpointTarget, ModelEndpoint};

/// Longest error body kept for diagnostics.
const MAX_ERROR_BODY: usize = 512;

pub struct HttpTransport {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    /// The API key is read from the named environment variable once, here.
    pub fn new(endpoint: &ModelEndpoint) -> Result<Self, BackendError> {
        let EndpointTarget::Http(base) = &endpoint.target else {
            return Err(BackendError::Config(format!(
                "{} is not an HTTP endpoint",
                endpoint.label()
            )));
        };
        let api_key = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!(
                    "environment variable {var} (api_key_env of {}) is not set",
                    endpoint.label()
                ))
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: chat_url(base.as_str()),
            api_key,
        })
    }
}

/// `https://host/v1` becomes `https://host/v1/chat/completions`.
pub fn chat_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else {
        format!("{base}/chat/completions")
    }
}

fn truncate(mut s: String) -> String {
    if s.len() > MAX_ERROR_BODY {
        let mut cut = MAX_ERROR_BODY;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

#[async_trait]
impl Transport for HttpTransport {
    async fn send(&self, body: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Transport(e.without_url().to_string())
            }
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| AttemptError::Transport(e.without_url().to_string()))?;
        if !status.is_success() {
            return Err(AttemptError::Status {
                code: status.as_u16(),
                body: truncate(text),
            });
        }
        serde_json::from_str(&text).map_err(|e| AttemptError::Protocol(e.to_string()))
    }

    fn describe(&self) -> String {
        self.url.clone()
    }
}
