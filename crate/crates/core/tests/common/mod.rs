#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_jsonl(name: &str) -> Vec<serde_json::Value> {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use semgate_core::backends::mock::{MockTransport, RuleSet};
use semgate_core::backends::wire::{WireChatRequest, WireChatResponse, WireUsage};
use semgate_core::backends::{AttemptError, ModelClient, Transport};
use semgate_core::config::{ModelEndpoint, Role};

pub fn mock(rules: RuleSet) -> Arc<ModelClient> {
    Arc::new(ModelClient::new(ModelEndpoint::mock(Role::Mock, rules)).unwrap())
}

pub fn client_with(rules: RuleSet, transport: Arc<dyn Transport>) -> Arc<ModelClient> {
    Arc::new(ModelClient::with_transport(ModelEndpoint::mock(Role::Mock, rules), transport))
}

fn last_user(body: &WireChatRequest) -> &str {
    body.messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

fn reply(body: &WireChatRequest, content: String) -> WireChatResponse {
    WireChatResponse::single("test", body.model.clone(), content, WireUsage::default())
}

/// Applies a rule set, then deletes every ASCII digit.
pub struct DigitStripper(pub RuleSet);

#[async_trait]
impl Transport for DigitStripper {
    async fn send(&self, body: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
        let out: String = self.0.apply(last_user(body)).chars().filter(|c| !c.is_ascii_digit()).collect();
        Ok(reply(body, out))
    }

    fn describe(&self) -> String {
        "digit-stripper".into()
    }
}

/// Always answers HTTP 500 and counts calls.
#[derive(Default)]
pub struct AlwaysDown {
    pub calls: AtomicUsize,
}

#[async_trait]
impl Transport for AlwaysDown {
    async fn send(&self, _body: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(AttemptError::Status {
            code: 500,
            body: "down".into(),
        })
    }

    fn describe(&self) -> String {
        "always-down".into()
    }
}

/// Rule-set transport that sleeps a content-dependent few milliseconds and
/// tracks how many calls are in flight at once.
#[derive(Default)]
pub struct Jittered {
    pub inflight: AtomicUsize,
    pub peak: AtomicUsize,
    pub calls: AtomicUsize,
}

impl Jittered {
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

pub struct JitteredRules {
    pub rules: RuleSet,
    pub stats: Arc<Jittered>,
}

#[async_trait]
impl Transport for JitteredRules {
    async fn send(&self, body: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
        let now = self.stats.inflight.fetch_add(1, Ordering::SeqCst) + 1;
        self.stats.peak.fetch_max(now, Ordering::SeqCst);
        self.stats.calls.fetch_add(1, Ordering::SeqCst);
        let text = last_user(body);
        let ms = text.bytes().map(u64::from).sum::<u64>() % 7 + 1;
        tokio::time::sleep(Duration::from_millis(ms)).await;
        let out = MockTransport::new(self.rules).send(body).await;
        self.stats.inflight.fetch_sub(1, Ordering::SeqCst);
        out
    }

    fn describe(&self) -> String {
        format!("jittered:{}", self.rules.name())
    }
}

/// Replies with the same text to every request and counts calls.
pub struct Fixed {
    pub reply: String,
    pub calls: AtomicUsize,
}

impl Fixed {
    pub fn new(reply: &str) -> Self {
        Self {
            reply: reply.into(),
            calls: AtomicUsize::new(0),
        }
    }
}

#[async_trait]
impl Transport for Fixed {
    async fn send(&self, body: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(reply(body, self.reply.clone()))
    }

    fn describe(&self) -> String {
        "fixed".into()
    }
}

pub fn swap_gateway(store: Arc<semgate_core::store::SessionStore>) -> semgate_core::gateway::Gateway {
    use semgate_core::gateway::{Gateway, GatewayClients};
    Gateway::new(
        GatewayClients {
            encoder: mock(RuleSet::ContextSwap),
            decoder: mock(RuleSet::ContextUnswap),
            cloud: mock(RuleSet::ArithSolver),
        },
        store,
        semgate_core::guard::Guard {
            derive_from_input: true,
            ..Default::default()
        },
        semgate_core::config::GatewayOptions::default(),
    )
}
