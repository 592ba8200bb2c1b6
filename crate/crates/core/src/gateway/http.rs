//! HTTP surface of the gateway.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /v1/chat/completions` | drop-in chat-completions proxy |
//! | `POST /se/query` | single exchange, optional transparency data |
//! | `GET /se/sessions/{id}` | one stored session |
//! | `GET /se/sessions?limit=N` | most recent sessions, newest first |
//! | `GET /healthz` | component reachability |
//!
//! Errors use one body shape: `{"error":{"code","message","session_id"?,
//! "guard_report"?}}`. Session inspection answers loopback peers only
//! unless `expose_inspection` is set.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{ConnectInfo, Path, Query, State};
use axum::http::{HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Gateway, GatewayError, GatewayRequest, TurnContext};
use crate::backends::wire::{WireChatRequest, WireChatResponse, WireUsage};
use crate::backends::{ChatMessage, MessageRole};
use crate::session::SessionQuadruple;

pub const SESSION_HEADER: &str = "x-semgate-session";
pub const DEFAULT_LIST_LIMIT: usize = 20;
pub const MAX_LIST_LIMIT: usize = 1000;

/// An error rendered in the gateway's JSON shape.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub session_id: Option<String>,
    pub guard_report: Option<serde_json::Value>,
    pub retry_after_ms: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            session_id: None,
            guard_report: None,
            retry_after_ms: None,
        }
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let status = match &e {
            GatewayError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            GatewayError::BypassDisabled => StatusCode::FORBIDDEN,
            GatewayError::DuplicateSession(_) => StatusCode::CONFLICT,
            GatewayError::NotFound(_) => StatusCode::NOT_FOUND,
            GatewayError::GuardRejected { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            GatewayError::EncoderFailed { .. }
            | GatewayError::CloudUnavailable { .. }
            | GatewayError::DecoderFailed { .. } => StatusCode::BAD_GATEWAY,
            GatewayError::Overloaded { .. } => StatusCode::SERVICE_UNAVAILABLE,
            GatewayError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut out = ApiError::new(status, e.code(), e.to_string());
        out.session_id = e.session_id().map(str::to_string);
        if let GatewayError::GuardRejected { report, .. } = &e {
            out.guard_report = serde_json::to_value(report).ok();
        }
        if let GatewayError::Overloaded { retry_after_ms, .. } = &e {
            out.retry_after_ms = Some(*retry_after_ms);
        }
        out
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({"code": self.code, "message": self.message});
        if let Some(id) = &self.session_id {
            err["session_id"] = json!(id);
        }
        if let Some(r) = self.guard_report {
            err["guard_report"] = r;
        }
        let mut resp = (self.status, Json(json!({ "error": err }))).into_response();
        if let Some(ms) = self.retry_after_ms {
            let secs = ms.div_ceil(1000).max(1);
            resp.headers_mut()
                .insert(axum::http::header::RETRY_AFTER, HeaderValue::from(secs));
        }
        if let Some(id) = self.session_id.as_deref().and_then(|s| HeaderValue::from_str(s).ok()) {
            resp.headers_mut().insert(HeaderName::from_static(SESSION_HEADER), id);
        }
        resp
    }
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(chat_completions))
        .route("/se/query", post(se_query))
        .route("/se/sessions", get(list_sessions))
        .route("/se/sessions/{id}", get(get_session))
        .route("/healthz", get(healthz))
        .with_state(gateway)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    gateway: Arc<Gateway>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(
        listener,
        router(gateway).into_make_service_with_connect_info::<SocketAddr>(),
    )
    .with_graceful_shutdown(shutdown)
    .await
}

fn with_session_header(mut resp: Response, id: &str) -> Response {
    if let Ok(v) = HeaderValue::from_str(id) {
        resp.headers_mut().insert(HeaderName::from_static(SESSION_HEADER), v);
    }
    resp
}

async fn se_query(
    State(gw): State<Arc<Gateway>>,
    body: Result<Json<GatewayRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let resp = gw.handle_query(req).await?;
    let id = resp.session_id.clone();
    Ok(with_session_header(Json(resp).into_response(), &id))
}

fn inspection_allowed(gw: &Gateway, peer: SocketAddr) -> Result<(), ApiError> {
    if gw.options().expose_inspection || peer.ip().is_loopback() {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "inspection_disabled",
            "session inspection is only served to loopback clients",
        ))
    }
}

async fn get_session(
    State(gw): State<Arc<Gateway>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    Path(id): Path<String>,
) -> Result<Json<SessionQuadruple>, ApiError> {
    inspection_allowed(&gw, peer)?;
    Ok(Json(gw.get_session(&id)?))
}

#[derive(Debug, Deserialize)]
struct ListParams {
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionList {
    pub sessions: Vec<SessionQuadruple>,
}

async fn list_sessions(
    State(gw): State<Arc<Gateway>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    params: Result<Query<ListParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<SessionList>, ApiError> {
    inspection_allowed(&gw, peer)?;
    let Query(p) = params.map_err(|r| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", r.body_text()))?;
    let limit = p.limit.unwrap_or(DEFAULT_LIST_LIMIT).min(MAX_LIST_LIMIT);
    Ok(Json(SessionList {
        sessions: gw.recent_sessions(limit),
    }))
}

async fn healthz(State(gw): State<Arc<Gateway>>) -> Response {
    let h = gw.health().await;
    let code = if h.ok() { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    (code, Json(h)).into_response()
}

/// Chat-completions proxy. The last message must be from the user; it is
/// the turn being answered. Earlier user turns are replaced by their
/// transformed text, earlier assistant turns by the cloud answer they were
/// restored from (or dropped when unknown), and system messages are not
/// forwarded.
async fn chat_completions(
    State(gw): State<Arc<Gateway>>,
    headers: HeaderMap,
    body: Result<Json<WireChatRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    if req.stream {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "streaming_unsupported",
            "stream=true is not supported by this gateway",
        ));
    }
    let Some((last, earlier)) = req.messages.split_last() else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", "messages must be non-empty"));
    };
    if MessageRole::parse(&last.role) != Some(MessageRole::User) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            "the last message must have role user",
        ));
    }
    let conversation = match headers.get(SESSION_HEADER).map(|v| v.to_str()) {
        Some(Ok(v)) if super::valid_session_id(v) => v.to_string(),
        Some(_) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_request",
                format!("malformed {SESSION_HEADER} header"),
            ))
        }
        None => super::new_session_id(),
    };

    let mut history = Vec::new();
    for m in earlier {
        match MessageRole::parse(&m.role) {
            Some(MessageRole::User) => {
                history.push(ChatMessage::user(gw.transformed_user_turn(&conversation, &m.content).await?));
            }
            Some(MessageRole::Assistant) => match gw.transformed_assistant_turn(&conversation, &m.content) {
                Some(t) => history.push(ChatMessage::assistant(t)),
                None => tracing::debug!(conversation = %conversation, "dropping unknown assistant turn"),
            },
            Some(MessageRole::System) => {}
            None => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "invalid_request",
                    format!("unknown message role `{}`", m.role),
                ))
            }
        }
    }
    let turn = req.messages.iter().filter(|m| m.role == "user").count();
    let ctx = TurnContext {
        conversation: Some(conversation.clone()),
        turn: Some(turn),
        history,
    };
    let resp = gw.handle_turn(GatewayRequest::new(last.content.clone()), ctx).await?;
    let usage = WireUsage::default();
    let body = WireChatResponse::single(format!("chatcmpl-{}", resp.session_id), req.model, resp.answer, usage);
    Ok(with_session_header(Json(body).into_response(), &conversation))
}
