//! Transport wrapper that keeps every outbound request body.
//!
//! Used to assert what actually left the process on a given leg.

use std::sync::{Arc, Mutex};

use async_trait::async_trait;

use super::wire::{WireChatRequest, WireChatResponse};
use super::{AttemptError, Transport};

pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    bodies: Mutex<Vec<String>>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            bodies: Mutex::new(Vec::new()),
        }
    }

    /// Serialized request bodies in send order.
    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.bodies.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True if any recorded body contains `needle`, either raw or in its
    /// JSON-escaped form.
    pub fn any_contains(&self, needle: &str) -> bool {
        let escaped = serde_json::to_string(needle).unwrap_or_default();
        let escaped = escaped.trim_matches('"');
        self.bodies
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .any(|b| b.contains(needle) || b.contains(escaped))
    }
}

#[async_trait]
impl Transport for RecordingTransport {
    async fn send(&self, body: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
        let text = serde_json::to_string(body).map_err(|e| AttemptError::Protocol(e.to_string()))?;
        self.bodies.lock().unwrap_or_else(|e| e.into_inner()).push(text);
        self.inner.send(body).await
    }

    fn describe(&self) -> String {
        format!("recording({})", self.inner.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{MockTransport, RuleSet};
    use crate::backends::wire::WireMessage;

    #[tokio::test]
    async fn records_and_forwards() {
        let t = RecordingTransport::new(Arc::new(MockTransport::new(RuleSet::Echo)));
        let req = WireChatRequest {
            model: "m".into(),
            messages: vec![WireMessage {
                role: "user".into(),
                content: "line \"one\"\nline two".into(),
            }],
            temperature: None,
            max_tokens: None,
            stream: false,
        };
        let r = t.send(&req).await.unwrap();
        assert_eq!(r.choices[0].message.content.as_deref(), Some("line \"one\"\nline two"));
        assert_eq!(t.len(), 1);
        assert!(t.any_contains("line \"one\"\nline two"));
        assert!(!t.any_contains("three"));
    }
}
