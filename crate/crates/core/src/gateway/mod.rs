//! Runtime pipeline: encode, guard, ask the cloud, decode, persist.
//!
//! Every query becomes one [`SessionQuadruple`] in the store. The record is
//! inserted as soon as the request is accepted and updated after each
//! stage, so a failed request leaves a record showing how far it got
//! (`meta.status`). The cloud request carries the encoder output only.

pub mod http;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::backends::{
    BackendError, ChatMessage, ChatRequest, ModelClient, TEMPERATURE_ANSWER, TEMPERATURE_RESTORE,
    TEMPERATURE_TRANSFORM,
};
use crate::compose::compose_decoder_input;
use crate::config::{Config, ConfigError, EndpointTarget, GatewayOptions, GuardPolicy, ModelEndpoint};
use crate::guard::{Guard, GuardReport, Lexicon, NumberCheckOptions};
use crate::session::{now_ms, SessionQuadruple};
use crate::store::{SessionStore, StoreError};

/// Values of `meta.status` on stored sessions.
pub mod status {
    pub const ENCODING: &str = "encoding";
    pub const PENDING: &str = "pending";
    pub const DECODING: &str = "decoding";
    pub const COMPLETE: &str = "complete";
    pub const REJECTED: &str = "rejected";
    pub const LOCAL_ONLY: &str = "local_only";
    pub const ENCODER_FAILED: &str = "encoder_failed";
    pub const DECODER_FAILED: &str = "decoder_failed";
}

pub const META_STATUS: &str = "status";
pub const META_MODE: &str = "mode";
pub const META_CONVERSATION: &str = "conversation";
pub const META_TURN: &str = "turn";
pub const META_ERROR: &str = "error";
pub const META_LOCAL_ANSWER: &str = "local_answer";

pub const MAX_SESSION_ID_LEN: usize = 128;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOptions {
    #[serde(default)]
    pub bypass: bool,
    #[serde(default)]
    pub transparency: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub options: QueryOptions,
    /// Shorthand for `options.transparency`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transparency: Option<bool>,
}

impl GatewayRequest {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn with_session(mut self, id: impl Into<String>) -> Self {
        self.session_id = Some(id.into());
        self
    }

    pub fn with_transparency(mut self) -> Self {
        self.options.transparency = true;
        self
    }

    pub fn wants_transparency(&self) -> bool {
        self.transparency.unwrap_or(self.options.transparency)
    }
}

/// Stage durations in microseconds. Stages are disjoint intervals inside
/// the total, so their sum never exceeds `total_us`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub encode_us: u64,
    pub guard_us: u64,
    pub cloud_us: u64,
    pub decode_us: u64,
    pub total_us: u64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> u64 {
        self.encode_us + self.guard_us + self.cloud_us + self.decode_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transparency {
    pub t_hat_o: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat_r: Option<String>,
    pub guard_report: GuardReport,
    pub encode_attempts: u32,
    pub mode: String,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayResponse {
    pub session_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transparency: Option<Transparency>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("bypass is disabled on this gateway")]
    BypassDisabled,
    #[error("session {0} already exists")]
    DuplicateSession(String),
    #[error("session {0} not found")]
    NotFound(String),
    #[error("transformed text failed the guard: {}", report.explain())]
    GuardRejected {
        session_id: String,
        report: GuardReport,
    },
    #[error("encoder failed: {reason}")]
    EncoderFailed { session_id: String, reason: String },
    #[error("cloud model unavailable: {reason}")]
    CloudUnavailable { session_id: String, reason: String },
    #[error("decoder failed: {reason}")]
    DecoderFailed { session_id: String, reason: String },
    #[error("gateway overloaded, retry after {retry_after_ms} ms")]
    Overloaded {
        session_id: Option<String>,
        retry_after_ms: u64,
    },
    #[error("session store: {0}")]
    Store(#[from] StoreError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::BypassDisabled => "bypass_disabled",
            GatewayError::DuplicateSession(_) => "duplicate_session",
            GatewayError::NotFound(_) => "not_found",
            GatewayError::GuardRejected { .. } => "guard_rejected",
            GatewayError::EncoderFailed { .. } => "encoder_failed",
            GatewayError::CloudUnavailable { .. } => "cloud_unavailable",
            GatewayError::DecoderFailed { .. } => "decoder_failed",
            GatewayError::Overloaded { .. } => "overloaded",
            GatewayError::Store(_) => "store_error",
        }
    }

    pub fn session_id(&self) -> Option<&str> {
        match self {
            GatewayError::DuplicateSession(id) | GatewayError::NotFound(id) => Some(id),
            GatewayError::GuardRejected { session_id, .. }
            | GatewayError::EncoderFailed { session_id, .. }
            | GatewayError::CloudUnavailable { session_id, .. }
            | GatewayError::DecoderFailed { session_id, .. } => Some(session_id),
            GatewayError::Overloaded { session_id, .. } => session_id.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayClients {
    pub encoder: Arc<ModelClient>,
    pub decoder: Arc<ModelClient>,
    pub cloud: Arc<ModelClient>,
}

impl GatewayClients {
    pub fn from_config(cfg: &Config) -> Result<Self, GatewaySetupError> {
        Ok(Self {
            encoder: Arc::new(ModelClient::new(cfg.endpoints.encoder()?.clone())?),
            decoder: Arc::new(ModelClient::new(cfg.endpoints.decoder()?.clone())?),
            cloud: Arc::new(ModelClient::new(cfg.endpoints.cloud.clone())?),
        })
    }
}

#[derive(Debug, Error)]
pub enum GatewaySetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("lexicon {path}: {source}")]
    Lexicon {
        path: String,
        source: std::io::Error,
    },
}

pub fn guard_from_options(opts: &GatewayOptions) -> Result<Guard, GatewaySetupError> {
    let lexicon = match &opts.lexicon_path {
        Some(p) => Lexicon::load(p).map_err(|source| GatewaySetupError::Lexicon {
            path: p.display().to_string(),
            source,
        })?,
        None => Lexicon::default(),
    };
    Ok(Guard {
        lexicon,
        derive_from_input: opts.derive_lexicon,
        numbers: NumberCheckOptions {
            strict_extra: opts.strict_extra_numbers,
            number_words: opts.number_words,
        },
    })
}

/// Reachability of one configured component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentHealth {
    pub target: String,
    pub model: String,
    pub reachable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub encoder: ComponentHealth,
    pub cloud: ComponentHealth,
    pub decoder: ComponentHealth,
    pub sessions: usize,
}

impl Health {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub const HEALTH_PROBE_TIMEOUT: Duration = Duration::from_secs(2);

/// Mock targets are always reachable; HTTP targets get a TCP connect probe.
pub async fn probe_endpoint(ep: &ModelEndpoint) -> ComponentHealth {
    let (reachable, detail) = match &ep.target {
        EndpointTarget::Mock(_) => (true, None),
        EndpointTarget::Http(url) => {
            let host = url.host_str().unwrap_or_default().trim_matches(['[', ']']).to_string();
            let port = url.port_or_known_default().unwrap_or(80);
            match tokio::time::timeout(HEALTH_PROBE_TIMEOUT, tokio::net::TcpStream::connect((host.as_str(), port))).await {
                Ok(Ok(_)) => (true, None),
                Ok(Err(e)) => (false, Some(e.to_string())),
                Err(_) => (false, Some("connect timed out".into())),
            }
        }
    };
    ComponentHealth {
        target: ep.target.to_string(),
        model: ep.model_name.clone(),
        reachable,
        detail,
    }
}

/// Prior conversation turns, already in the transformed context.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TurnContext {
    pub conversation: Option<String>,
    pub turn: Option<usize>,
    pub history: Vec<ChatMessage>,
}

pub struct Gateway {
    clients: GatewayClients,
    store: Arc<SessionStore>,
    guard: Guard,
    options: GatewayOptions,
    cloud_slots: Semaphore,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("clients", &self.clients)
            .field("options", &self.options)
            .finish()
    }
}

fn backend_reason(e: &BackendError) -> String {
    e.to_string()
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= MAX_SESSION_ID_LEN && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.:".contains(c))
}

pub fn new_session_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

fn micros(d: Duration) -> u64 {
    d.as_micros() as u64
}

impl Gateway {
    pub fn new(clients: GatewayClients, store: Arc<SessionStore>, guard: Guard, options: GatewayOptions) -> Self {
        let cloud_slots = Semaphore::new(options.max_inflight_cloud.max(1) as usize);
        Self {
            clients,
            store,
            guard,
            options,
            cloud_slots,
        }
    }

    pub fn from_config(cfg: &Config, store: Arc<SessionStore>) -> Result<Self, GatewaySetupError> {
        Ok(Self::new(
            GatewayClients::from_config(cfg)?,
            store,
            guard_from_options(&cfg.gateway)?,
            cfg.gateway.clone(),
        ))
    }

    pub fn options(&self) -> &GatewayOptions {
        &self.options
    }

    pub fn store(&self) -> &Arc<SessionStore> {
        &self.store
    }

    pub fn clients(&self) -> &GatewayClients {
        &self.clients
    }

    pub async fn handle_query(&self, req: GatewayRequest) -> Result<GatewayResponse, GatewayError> {
        self.handle_turn(req, TurnContext::default()).await
    }

    /// Run one exchange, with optional transformed history for the cloud leg.
    pub async fn handle_turn(&self, req: GatewayRequest, ctx: TurnContext) -> Result<GatewayResponse, GatewayError> {
        let started = Instant::now();
        if req.text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("text must be non-empty".into()));
        }
        if req.options.bypass && !self.options.allow_bypass {
            return Err(GatewayError::BypassDisabled);
        }
        let session_id = match req.session_id.clone() {
            Some(id) if valid_session_id(&id) => id,
            Some(_) => {
                return Err(GatewayError::InvalidRequest(format!(
                    "session_id must be 1-{MAX_SESSION_ID_LEN} characters from [A-Za-z0-9-_.:]"
                )))
            }
            None => new_session_id(),
        };
        let transparency = req.wants_transparency() && self.options.transparency;
        let mut timings = StageTimings::default();

        let mut q = SessionQuadruple::new(&session_id, req.text.clone());
        q.meta.insert(META_STATUS.into(), status::ENCODING.into());
        if let Some(c) = &ctx.conversation {
            q.meta.insert(META_CONVERSATION.into(), c.clone());
        }
        if let Some(t) = ctx.turn {
            q.meta.insert(META_TURN.into(), t.to_string());
        }
        let mode = if req.options.bypass { "bypass" } else { "encrypted" };
        q.meta.insert(META_MODE.into(), mode.into());
        self.store.put(q.clone()).map_err(|e| match e {
            StoreError::Duplicate(id) => GatewayError::DuplicateSession(id),
            other => GatewayError::Store(other),
        })?;
        tracing::info!(session = %session_id, mode, "query accepted");

        let (t_hat_o, report, attempts) = if req.options.bypass {
            (req.text.clone(), GuardReport { passed: true, ..Default::default() }, 0)
        } else {
            match self.encode(&q.t_o, &mut timings).await {
                Ok(x) => x,
                Err(e) => {
                    let reason = backend_reason(&e);
                    self.mark(&mut q, status::ENCODER_FAILED, Some(&reason))?;
                    return Err(match e {
                        BackendError::BackPressure { retry_after_ms, .. } => GatewayError::Overloaded {
                            session_id: Some(session_id),
                            retry_after_ms,
                        },
                        _ => GatewayError::EncoderFailed { session_id, reason },
                    });
                }
            }
        };
        q.t_hat_o = Some(t_hat_o.clone());

        if !report.passed {
            tracing::warn!(session = %session_id, attempts, reason = %report.explain(), "guard rejected transform");
            return match self.options.guard_policy {
                GuardPolicy::RejectWithExplanation => {
                    self.mark(&mut q, status::REJECTED, Some(&report.explain()))?;
                    Err(GatewayError::GuardRejected { session_id, report })
                }
                GuardPolicy::FallbackLocalOnly => {
                    self.local_only(q, report, attempts, transparency, timings, started).await
                }
            };
        }

        q.meta.insert(META_STATUS.into(), status::PENDING.into());
        self.store.update(q.clone())?;

        let cloud_started = Instant::now();
        let cloud_result = {
            let _slot = self.cloud_slots.acquire().await.expect("semaphore never closed");
            let mut messages = ctx.history.clone();
            messages.push(ChatMessage::user(t_hat_o.clone()));
            self.clients
                .cloud
                .complete(&ChatRequest::new(messages).with_temperature(TEMPERATURE_ANSWER))
                .await
        };
        timings.cloud_us = micros(cloud_started.elapsed());
        let t_hat_r = match cloud_result {
            Ok(r) if !r.content.trim().is_empty() => r.content.trim().to_string(),
            Ok(_) => {
                let reason = "cloud model returned an empty answer".to_string();
                self.mark(&mut q, status::PENDING, Some(&reason))?;
                return Err(GatewayError::CloudUnavailable { session_id, reason });
            }
            Err(e) => {
                let reason = backend_reason(&e);
                self.mark(&mut q, status::PENDING, Some(&reason))?;
                return Err(match e {
                    BackendError::BackPressure { retry_after_ms, .. } => GatewayError::Overloaded {
                        session_id: Some(session_id),
                        retry_after_ms,
                    },
                    _ => GatewayError::CloudUnavailable { session_id, reason },
                });
            }
        };
        q.t_hat_r = Some(t_hat_r.clone());
        q.meta.insert(META_STATUS.into(), status::DECODING.into());
        q.meta.remove(META_ERROR);
        self.store.update(q.clone())?;

        let t_r = if req.options.bypass {
            t_hat_r.clone()
        } else {
            let decode_started = Instant::now();
            let decoded = self
                .clients
                .decoder
                .complete(
                    &ChatRequest::new(vec![ChatMessage::user(compose_decoder_input(&q.t_o, &t_hat_o, &t_hat_r))])
                        .with_temperature(TEMPERATURE_RESTORE),
                )
                .await;
            timings.decode_us = micros(decode_started.elapsed());
            match decoded {
                Ok(r) if !r.content.trim().is_empty() => r.content.trim().to_string(),
                Ok(_) => {
                    let reason = "decoder returned an empty answer".to_string();
                    self.mark(&mut q, status::DECODER_FAILED, Some(&reason))?;
                    return Err(GatewayError::DecoderFailed { session_id, reason });
                }
                Err(e) => {
                    let reason = backend_reason(&e);
                    self.mark(&mut q, status::DECODER_FAILED, Some(&reason))?;
                    return Err(GatewayError::DecoderFailed { session_id, reason });
                }
            }
        };
        q.t_r = Some(t_r.clone());
        q.completed_at = Some(now_ms().max(q.created_at));
        q.meta.insert(META_STATUS.into(), status::COMPLETE.into());
        self.store.update(q)?;
        timings.total_us = micros(started.elapsed());
        tracing::info!(session = %session_id, total_us = timings.total_us, "query complete");

        Ok(GatewayResponse {
            session_id,
            answer: t_r,
            transparency: transparency.then(|| Transparency {
                t_hat_o,
                t_hat_r: Some(t_hat_r),
                guard_report: report,
                encode_attempts: attempts,
                mode: mode.into(),
                timings,
            }),
        })
    }

    /// The guarded encoder stage alone: `(t_hat_o, report, attempts)`.
    pub async fn encode_only(&self, t_o: &str) -> Result<(String, GuardReport, u32), BackendError> {
        self.encode(t_o, &mut StageTimings::default()).await
    }

    /// Encoder with guard retries. Returns the last attempt and its report.
    async fn encode(&self, t_o: &str, timings: &mut StageTimings) -> Result<(String, GuardReport, u32), BackendError> {
        let req = ChatRequest::new(vec![ChatMessage::user(t_o)]).with_temperature(TEMPERATURE_TRANSFORM);
        let mut last = (String::new(), GuardReport::default(), 0);
        for attempt in 1..=self.options.guard_retries + 1 {
            let t0 = Instant::now();
            let out = self.clients.encoder.complete(&req).await?.content.trim().to_string();
            timings.encode_us += micros(t0.elapsed());
            let t1 = Instant::now();
            let mut report = self.guard.check(t_o, &out);
            if out.is_empty() {
                report.passed = false;
                report.warnings.push("encoder returned empty text".into());
            }
            timings.guard_us += micros(t1.elapsed());
            let passed = report.passed;
            last = (out, report, attempt);
            if passed {
                break;
            }
        }
        Ok(last)
    }

    /// Guard failed under `fallback_local_only`: answer with the local
    /// decoder model from the original text; nothing reaches the cloud.
    async fn local_only(
        &self,
        mut q: SessionQuadruple,
        report: GuardReport,
        attempts: u32,
        transparency: bool,
        mut timings: StageTimings,
        started: Instant,
    ) -> Result<GatewayResponse, GatewayError> {
        let session_id = q.session_id.clone();
        let t0 = Instant::now();
        let decoded = self
            .clients
            .decoder
            .complete(&ChatRequest::new(vec![ChatMessage::user(q.t_o.clone())]).with_temperature(TEMPERATURE_ANSWER))
            .await;
        timings.decode_us = micros(t0.elapsed());
        let answer = match decoded {
            Ok(r) if !r.content.trim().is_empty() => r.content.trim().to_string(),
            Ok(_) => {
                let reason = "local model returned an empty answer".to_string();
                self.mark(&mut q, status::DECODER_FAILED, Some(&reason))?;
                return Err(GatewayError::DecoderFailed { session_id, reason });
            }
            Err(e) => {
                let reason = backend_reason(&e);
                self.mark(&mut q, status::DECODER_FAILED, Some(&reason))?;
                return Err(GatewayError::DecoderFailed { session_id, reason });
            }
        };
        q.meta.insert(META_LOCAL_ANSWER.into(), answer.clone());
        q.meta.insert(META_ERROR.into(), report.explain());
        q.completed_at = Some(now_ms().max(q.created_at));
        q.meta.insert(META_STATUS.into(), status::LOCAL_ONLY.into());
        self.store.update(q.clone())?;
        timings.total_us = micros(started.elapsed());
        Ok(GatewayResponse {
            session_id,
            answer,
            transparency: transparency.then(|| Transparency {
                t_hat_o: q.t_hat_o.clone().unwrap_or_default(),
                t_hat_r: None,
                guard_report: report,
                encode_attempts: attempts,
                mode: status::LOCAL_ONLY.into(),
                timings,
            }),
        })
    }

    fn mark(&self, q: &mut SessionQuadruple, state: &str, error: Option<&str>) -> Result<(), GatewayError> {
        q.meta.insert(META_STATUS.into(), state.into());
        if let Some(e) = error {
            q.meta.insert(META_ERROR.into(), e.into());
        }
        self.store.update(q.clone())?;
        Ok(())
    }

    pub fn get_session(&self, id: &str) -> Result<SessionQuadruple, GatewayError> {
        self.store.get(id).ok_or_else(|| GatewayError::NotFound(id.to_string()))
    }

    pub fn recent_sessions(&self, limit: usize) -> Vec<SessionQuadruple> {
        self.store.recent(limit)
    }

    /// Map an earlier user turn of a conversation to its transformed text,
    /// encoding it afresh when the store has no record of it.
    pub async fn transformed_user_turn(&self, conversation: &str, text: &str) -> Result<String, GatewayError> {
        let known = self.store.find_latest(|q| {
            q.t_o == text
                && q.t_hat_o.is_some()
                && q.meta.get(META_CONVERSATION).map(String::as_str) == Some(conversation)
                && q.meta.get(META_STATUS).map(String::as_str) == Some(status::COMPLETE)
        });
        if let Some(q) = known {
            return Ok(q.t_hat_o.unwrap_or_default());
        }
        let mut timings = StageTimings::default();
        let (t_hat_o, report, _) = self.encode(text, &mut timings).await.map_err(|e| GatewayError::EncoderFailed {
            session_id: conversation.to_string(),
            reason: backend_reason(&e),
        })?;
        if !report.passed {
            return Err(GatewayError::GuardRejected {
                session_id: conversation.to_string(),
                report,
            });
        }
        Ok(t_hat_o)
    }

    /// Transformed counterpart of an earlier assistant answer, if known.
    pub fn transformed_assistant_turn(&self, conversation: &str, text: &str) -> Option<String> {
        self.store
            .find_latest(|q| {
                q.t_r.as_deref() == Some(text) && q.meta.get(META_CONVERSATION).map(String::as_str) == Some(conversation)
            })
            .and_then(|q| q.t_hat_r)
    }

    pub async fn health(&self) -> Health {
        let (encoder, cloud, decoder) = tokio::join!(
            probe_endpoint(self.clients.encoder.endpoint()),
            probe_endpoint(self.clients.cloud.endpoint()),
            probe_endpoint(self.clients.decoder.endpoint()),
        );
        let all = encoder.reachable && cloud.reachable && decoder.reachable;
        Health {
            status: if all { "ok" } else { "degraded" }.into(),
            encoder,
            cloud,
            decoder,
            sessions: self.store.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{clinic_vocabulary, RuleSet};
    use crate::config::Role;
    use crate::metrics::tokenize;

    fn mock(rules: RuleSet) -> Arc<ModelClient> {
        Arc::new(ModelClient::new(ModelEndpoint::mock(Role::Mock, rules)).unwrap())
    }

    fn gateway(encoder: RuleSet, options: GatewayOptions) -> Gateway {
        Gateway::new(
            GatewayClients {
                encoder: mock(encoder),
                decoder: mock(RuleSet::ContextUnswap),
                cloud: mock(RuleSet::ArithSolver),
            },
            Arc::new(SessionStore::in_memory()),
            Guard {
                derive_from_input: true,
                ..Default::default()
            },
            options,
        )
    }

    const CLINIC: &str = "A clinic has 3 wards with 4 beds each. Total beds?";

    #[tokio::test]
    async fn mock_stack_answers_and_persists() {
        let gw = gateway(RuleSet::ContextSwap, GatewayOptions::default());
        let resp = gw.handle_query(GatewayRequest::new(CLINIC).with_transparency()).await.unwrap();
        assert!(resp.answer.contains("12"));
        let q = gw.get_session(&resp.session_id).unwrap();
        assert!(q.is_complete());
        assert_eq!(q.meta[META_STATUS], status::COMPLETE);
        let t = resp.transparency.unwrap();
        let vocab: std::collections::HashSet<&str> = clinic_vocabulary().collect();
        assert!(tokenize(&t.t_hat_o).iter().all(|tok| !vocab.contains(tok.as_str())));
        assert!(t.timings.stage_sum() <= t.timings.total_us);
    }

    #[tokio::test]
    async fn transparency_needs_request_and_config() {
        let gw = gateway(RuleSet::ContextSwap, GatewayOptions::default());
        assert!(gw.handle_query(GatewayRequest::new(CLINIC)).await.unwrap().transparency.is_none());
        let off = gateway(
            RuleSet::ContextSwap,
            GatewayOptions {
                transparency: false,
                ..Default::default()
            },
        );
        assert!(off
            .handle_query(GatewayRequest::new(CLINIC).with_transparency())
            .await
            .unwrap()
            .transparency
            .is_none());
    }

    #[tokio::test]
    async fn guard_policies() {
        let gw = gateway(RuleSet::Echo, GatewayOptions::default());
        let err = gw
            .handle_query(GatewayRequest::new("Nurse Rivera has 3 beds.").with_session("g1"))
            .await
            .unwrap_err();
        assert!(matches!(err, GatewayError::GuardRejected { .. }));
        assert_eq!(gw.get_session("g1").unwrap().meta[META_STATUS], status::REJECTED);

        let local = gateway(
            RuleSet::Echo,
            GatewayOptions {
                guard_policy: GuardPolicy::FallbackLocalOnly,
                ..Default::default()
            },
        );
        let resp = local
            .handle_query(GatewayRequest::new("Nurse Rivera has 3 beds.").with_session("g2"))
            .await
            .unwrap();
        let q = local.get_session("g2").unwrap();
        assert_eq!(q.meta[META_STATUS], status::LOCAL_ONLY);
        assert!(q.t_hat_r.is_none());
        assert_eq!(resp.answer, q.meta[META_LOCAL_ANSWER]);
    }

    #[tokio::test]
    async fn request_validation() {
        let gw = gateway(RuleSet::ContextSwap, GatewayOptions::default());
        assert!(matches!(
            gw.handle_query(GatewayRequest::new("  ")).await,
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut bypass = GatewayRequest::new(CLINIC);
        bypass.options.bypass = true;
        assert!(matches!(gw.handle_query(bypass).await, Err(GatewayError::BypassDisabled)));
        gw.handle_query(GatewayRequest::new(CLINIC).with_session("dup")).await.unwrap();
        assert!(matches!(
            gw.handle_query(GatewayRequest::new(CLINIC).with_session("dup")).await,
            Err(GatewayError::DuplicateSession(_))
        ));
        assert!(matches!(gw.get_session("zzz"), Err(GatewayError::NotFound(_))));
    }

    #[test]
    fn request_json_forms() {
        let a: GatewayRequest = serde_json::from_str(r#"{"text":"x","transparency":true}"#).unwrap();
        assert!(a.wants_transparency());
        let b: GatewayRequest = serde_json::from_str(r#"{"text":"x","options":{"transparency":true}}"#).unwrap();
        assert!(b.wants_transparency());
        let c: GatewayRequest = serde_json::from_str(r#"{"text":"x"}"#).unwrap();
        assert!(!c.wants_transparency());
    }
}
