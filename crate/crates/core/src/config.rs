//! Configuration file loading.
//!
//! The file is TOML. Top-level tables: `endpoints.{cloud,encoder,decoder,
//! judge}` plus optional per-stage overrides `endpoints.{generate,transform,
//! restore}` used by distillation; `prompts`, `listgen`, `metrics`,
//! `gateway`, `store` and `distill`. Relative paths resolve against the
//! directory holding the config file. See `docs/config.md` for every key.
//!
//! Credentials never appear in the file: an endpoint names the environment
//! variable that holds its key (`api_key_env`).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::backends::mock::RuleSet;
use crate::listgen::ListGenConfig;
use crate::prompts::{PromptError, PromptSet};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("prompt set: {0}")]
    Prompt(#[from] PromptError),
}

impl ConfigError {
    fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// The key path the error refers to, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Missing { key } | ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// Which job an endpoint does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    CloudCllm,
    LocalEncoder,
    LocalDecoder,
    Judge,
    Mock,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::CloudCllm => "cloud_cllm",
            Role::LocalEncoder => "local_encoder",
            Role::LocalDecoder => "local_decoder",
            Role::Judge => "judge",
            Role::Mock => "mock",
        }
    }
}

/// Where requests go: a chat-completions server or an in-process mock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EndpointTarget {
    Http(Url),
    Mock(RuleSet),
}

impl EndpointTarget {
    pub fn parse(raw: &str) -> Result<Self, String> {
        if let Some(rule) = raw.strip_prefix("mock:") {
            return RuleSet::from_name(rule)
                .map(EndpointTarget::Mock)
                .map_err(|e| e.to_string());
        }
        let url = Url::parse(raw).map_err(|e| format!("malformed URL `{raw}`: {e}"))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(format!("unsupported URL scheme `{}`", url.scheme()));
        }
        if url.host().is_none() {
            return Err(format!("URL `{raw}` has no host"));
        }
        Ok(EndpointTarget::Http(url))
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, EndpointTarget::Mock(_))
    }
}

impl std::fmt::Display for EndpointTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EndpointTarget::Http(u) => write!(f, "{u}"),
            EndpointTarget::Mock(r) => write!(f, "mock:{}", r.name()),
        }
    }
}

/// A role-tagged chat-completion backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEndpoint {
    pub role: Role,
    pub target: EndpointTarget,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub requests_per_minute: u32,
    /// In-flight request cap for this endpoint.
    pub max_concurrency: u32,
    /// First retry delay; doubles per attempt up to `MAX_BACKOFF_MS`.
    pub backoff_ms: u64,
    /// Longest a caller may queue on the rate limiter before getting a
    /// back-pressure error.
    pub max_queue_ms: u64,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_RPM: u32 = 60;
pub const DEFAULT_MAX_CONCURRENCY: u32 = 8;
pub const DEFAULT_BACKOFF_MS: u64 = 250;
pub const DEFAULT_MAX_QUEUE_MS: u64 = 120_000;
pub const MAX_BACKOFF_MS: u64 = 8_000;

impl ModelEndpoint {
    /// A mock endpoint with default limits and no rate-limit pressure.
    pub fn mock(role: Role, rules: RuleSet) -> Self {
        Self {
            role,
            target: EndpointTarget::Mock(rules),
            model_name: format!("mock-{}", rules.name()),
            api_key_env: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            requests_per_minute: 600_000,
            max_concurrency: 64,
            backoff_ms: 1,
            max_queue_ms: DEFAULT_MAX_QUEUE_MS,
            temperature: None,
            max_tokens: None,
        }
    }

    pub fn http(role: Role, url: Url, model_name: impl Into<String>) -> Self {
        Self {
            role,
            target: EndpointTarget::Http(url),
            model_name: model_name.into(),
            api_key_env: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            requests_per_minute: DEFAULT_RPM,
            max_concurrency: DEFAULT_MAX_CONCURRENCY,
            backoff_ms: DEFAULT_BACKOFF_MS,
            max_queue_ms: DEFAULT_MAX_QUEUE_MS,
            temperature: None,
            max_tokens: None,
        }
    }

    /// Short label for logs; never includes credentials.
    pub fn label(&self) -> String {
        format!("{}({})", self.role.as_str(), self.model_name)
    }
}

/// What the gateway does when the encoder output keeps failing the guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardPolicy {
    #[default]
    RejectWithExplanation,
    FallbackLocalOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints {
    pub cloud: ModelEndpoint,
    pub encoder: Option<ModelEndpoint>,
    pub decoder: Option<ModelEndpoint>,
    pub judge: Option<ModelEndpoint>,
    pub generate: Option<ModelEndpoint>,
    pub transform: Option<ModelEndpoint>,
    pub restore: Option<ModelEndpoint>,
}

impl Endpoints {
    pub fn encoder(&self) -> Result<&ModelEndpoint, ConfigError> {
        self.encoder.as_ref().ok_or_else(|| ConfigError::Missing {
            key: "endpoints.encoder".into(),
        })
    }

    pub fn decoder(&self) -> Result<&ModelEndpoint, ConfigError> {
        self.decoder.as_ref().ok_or_else(|| ConfigError::Missing {
            key: "endpoints.decoder".into(),
        })
    }

    pub fn judge(&self) -> Result<&ModelEndpoint, ConfigError> {
        self.judge.as_ref().ok_or_else(|| ConfigError::Missing {
            key: "endpoints.judge".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayOptions {
    pub listen_addr: SocketAddr,
    pub allow_bypass: bool,
    pub transparency: bool,
    pub guard_policy: GuardPolicy,
    pub guard_retries: u32,
    pub max_inflight_cloud: u32,
    /// Serve session inspection endpoints to non-loopback peers.
    pub expose_inspection: bool,
    pub lexicon_path: Option<PathBuf>,
    /// Add capitalized multi-word spans of each input to the lexicon.
    pub derive_lexicon: bool,
    pub strict_extra_numbers: bool,
    pub number_words: bool,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 8787)),
            allow_bypass: false,
            transparency: true,
            guard_policy: GuardPolicy::default(),
            guard_retries: 2,
            max_inflight_cloud: 32,
            expose_inspection: false,
            lexicon_path: None,
            derive_lexicon: true,
            strict_extra_numbers: false,
            number_words: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillOptions {
    pub parallelism: usize,
    pub retry_budget: u32,
    pub failure_tolerance: f64,
    pub seed: u64,
    pub question_field: String,
    pub label_field: Option<String>,
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            retry_budget: 2,
            failure_tolerance: 0.2,
            seed: 0,
            question_field: "question".into(),
            label_field: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsOptions {
    pub parallelism: usize,
    /// METEOR chunk search budget (nodes) before settling on the best found.
    pub meteor_search_budget: u64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            meteor_search_budget: crate::metrics::meteor::DEFAULT_SEARCH_BUDGET,
        }
    }
}

/// Validated, immutable configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub endpoints: Endpoints,
    pub prompts: PromptSet,
    pub prompts_path: Option<PathBuf>,
    pub listgen: ListGenConfig,
    pub metrics: MetricsOptions,
    pub gateway: GatewayOptions,
    pub store_path: PathBuf,
    pub distill: DistillOptions,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    endpoints: Option<RawEndpoints>,
    prompts: Option<RawPrompts>,
    listgen: Option<RawListGen>,
    metrics: Option<RawMetrics>,
    gateway: Option<RawGateway>,
    store: Option<RawStore>,
    distill: Option<RawDistill>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoints {
    cloud: Option<RawEndpoint>,
    encoder: Option<RawEndpoint>,
    decoder: Option<RawEndpoint>,
    judge: Option<RawEndpoint>,
    generate: Option<RawEndpoint>,
    transform: Option<RawEndpoint>,
    restore: Option<RawEndpoint>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    base_url: Option<String>,
    model_name: Option<String>,
    api_key_env: Option<String>,
    timeout_ms: Option<i64>,
    max_retries: Option<i64>,
    requests_per_minute: Option<i64>,
    max_concurrency: Option<i64>,
    backoff_ms: Option<i64>,
    max_queue_ms: Option<i64>,
    temperature: Option<f64>,
    max_tokens: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrompts {
    path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawListGen {
    n_min: Option<i64>,
    n_max: Option<i64>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    decimals: Option<i64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    parallelism: Option<i64>,
    meteor_search_budget: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGateway {
    listen_addr: Option<String>,
    allow_bypass: Option<bool>,
    transparency: Option<bool>,
    guard_policy: Option<GuardPolicy>,
    guard_retries: Option<i64>,
    max_inflight_cloud: Option<i64>,
    expose_inspection: Option<bool>,
    lexicon_path: Option<PathBuf>,
    derive_lexicon: Option<bool>,
    strict_extra_numbers: Option<bool>,
    number_words: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStore {
    path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistill {
    parallelism: Option<i64>,
    retry_budget: Option<i64>,
    failure_tolerance: Option<f64>,
    seed: Option<u64>,
    question_field: Option<String>,
    label_field: Option<String>,
}

/// Read and validate a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Config::from_toml_str(&text, base)
}

fn positive(key: &str, v: Option<i64>, default: u64) -> Result<u64, ConfigError> {
    match v {
        None => Ok(default),
        Some(n) if n >= 1 => Ok(n as u64),
        Some(n) => Err(ConfigError::invalid(key, format!("must be a positive integer (got {n})"))),
    }
}

fn non_negative(key: &str, v: Option<i64>, default: u64) -> Result<u64, ConfigError> {
    match v {
        None => Ok(default),
        Some(n) if n >= 0 => Ok(n as u64),
        Some(n) => Err(ConfigError::invalid(key, format!("must not be negative (got {n})"))),
    }
}

fn to_u32(key: &str, v: u64) -> Result<u32, ConfigError> {
    u32::try_from(v).map_err(|_| ConfigError::invalid(key, "value too large"))
}

fn is_env_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn build_endpoint(key: &str, role: Role, raw: RawEndpoint) -> Result<ModelEndpoint, ConfigError> {
    let url_key = format!("{key}.base_url");
    let base_url = raw.base_url.ok_or_else(|| ConfigError::Missing { key: url_key.clone() })?;
    let target = EndpointTarget::parse(&base_url).map_err(|r| ConfigError::invalid(&url_key, r))?;
    let model_name = match (raw.model_name, &target) {
        (Some(m), _) if !m.trim().is_empty() => m,
        (Some(_), _) => return Err(ConfigError::invalid(format!("{key}.model_name"), "must be non-empty")),
        (None, EndpointTarget::Mock(r)) => format!("mock-{}", r.name()),
        (None, EndpointTarget::Http(_)) => {
            return Err(ConfigError::Missing {
                key: format!("{key}.model_name"),
            })
        }
    };
    if let Some(env) = &raw.api_key_env {
        if !is_env_var_name(env) {
            return Err(ConfigError::invalid(
                format!("{key}.api_key_env"),
                "must be an environment variable name such as OPENAI_API_KEY, not a credential",
            ));
        }
    }
    let k = |f: &str| format!("{key}.{f}");
    let temperature = match raw.temperature {
        Some(t) if !(0.0..=2.0).contains(&t) => {
            return Err(ConfigError::invalid(k("temperature"), "must be within [0, 2]"))
        }
        t => t,
    };
    let max_tokens = raw
        .max_tokens
        .map(|v| positive(&k("max_tokens"), Some(v), 0).and_then(|v| to_u32(&k("max_tokens"), v)))
        .transpose()?;
    Ok(ModelEndpoint {
        role,
        target,
        model_name,
        api_key_env: raw.api_key_env,
        timeout_ms: positive(&k("timeout_ms"), raw.timeout_ms, DEFAULT_TIMEOUT_MS)?,
        max_retries: to_u32(
            &k("max_retries"),
            non_negative(&k("max_retries"), raw.max_retries, DEFAULT_MAX_RETRIES as u64)?,
        )?,
        requests_per_minute: to_u32(
            &k("requests_per_minute"),
            positive(&k("requests_per_minute"), raw.requests_per_minute, DEFAULT_RPM as u64)?,
        )?,
        max_concurrency: to_u32(
            &k("max_concurrency"),
            positive(&k("max_concurrency"), raw.max_concurrency, DEFAULT_MAX_CONCURRENCY as u64)?,
        )?,
        backoff_ms: non_negative(&k("backoff_ms"), raw.backoff_ms, DEFAULT_BACKOFF_MS)?,
        max_queue_ms: non_negative(&k("max_queue_ms"), raw.max_queue_ms, DEFAULT_MAX_QUEUE_MS)?,
        temperature,
        max_tokens,
    })
}

impl Config {
    /// Parse and validate TOML text; relative paths resolve against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;

        let eps = raw.endpoints.unwrap_or_default();
        let cloud = build_endpoint(
            "endpoints.cloud",
            Role::CloudCllm,
            eps.cloud.ok_or_else(|| ConfigError::Missing {
                key: "endpoints.cloud".into(),
            })?,
        )?;
        let opt = |name: &str, role: Role, raw: Option<RawEndpoint>| {
            raw.map(|r| build_endpoint(&format!("endpoints.{name}"), role, r))
                .transpose()
        };
        let endpoints = Endpoints {
            cloud,
            encoder: opt("encoder", Role::LocalEncoder, eps.encoder)?,
            decoder: opt("decoder", Role::LocalDecoder, eps.decoder)?,
            judge: opt("judge", Role::Judge, eps.judge)?,
            generate: opt("generate", Role::CloudCllm, eps.generate)?,
            transform: opt("transform", Role::CloudCllm, eps.transform)?,
            restore: opt("restore", Role::CloudCllm, eps.restore)?,
        };

        let prompts_path = raw.prompts.and_then(|p| p.path).map(|p| resolve(base, p));
        let prompts = match &prompts_path {
            Some(p) => PromptSet::load(p)?,
            None => PromptSet::bundled(),
        };

        let lg = raw.listgen.unwrap_or_default();
        let listgen = ListGenConfig {
            n_min: to_u32(
                "listgen.n_min",
                positive("listgen.n_min", lg.n_min, crate::listgen::DEFAULT_N_MIN as u64)?,
            )?,
            n_max: to_u32(
                "listgen.n_max",
                positive("listgen.n_max", lg.n_max, crate::listgen::DEFAULT_N_MAX as u64)?,
            )?,
            v_min: lg.v_min.unwrap_or(crate::listgen::DEFAULT_V_MIN),
            v_max: lg.v_max.unwrap_or(crate::listgen::DEFAULT_V_MAX),
            decimals: to_u32("listgen.decimals", non_negative("listgen.decimals", lg.decimals, 0)?)?,
            seed: lg.seed,
        };
        listgen
            .validate()
            .map_err(|e| ConfigError::invalid("listgen", e.to_string()))?;

        let m = raw.metrics.unwrap_or_default();
        let metrics = MetricsOptions {
            parallelism: positive("metrics.parallelism", m.parallelism, 4)? as usize,
            meteor_search_budget: positive(
                "metrics.meteor_search_budget",
                m.meteor_search_budget,
                crate::metrics::meteor::DEFAULT_SEARCH_BUDGET,
            )?,
        };

        let g = raw.gateway.unwrap_or_default();
        let defaults = GatewayOptions::default();
        let listen_addr = match g.listen_addr {
            Some(a) => a.parse().map_err(|e| {
                ConfigError::invalid("gateway.listen_addr", format!("`{a}`: {e}"))
            })?,
            None => defaults.listen_addr,
        };
        let gateway = GatewayOptions {
            listen_addr,
            allow_bypass: g.allow_bypass.unwrap_or(defaults.allow_bypass),
            transparency: g.transparency.unwrap_or(defaults.transparency),
            guard_policy: g.guard_policy.unwrap_or_default(),
            guard_retries: to_u32(
                "gateway.guard_retries",
                non_negative("gateway.guard_retries", g.guard_retries, defaults.guard_retries as u64)?,
            )?,
            max_inflight_cloud: to_u32(
                "gateway.max_inflight_cloud",
                positive(
                    "gateway.max_inflight_cloud",
                    g.max_inflight_cloud,
                    defaults.max_inflight_cloud as u64,
                )?,
            )?,
            expose_inspection: g.expose_inspection.unwrap_or(defaults.expose_inspection),
            lexicon_path: g.lexicon_path.map(|p| resolve(base, p)),
            derive_lexicon: g.derive_lexicon.unwrap_or(defaults.derive_lexicon),
            strict_extra_numbers: g.strict_extra_numbers.unwrap_or(false),
            number_words: g.number_words.unwrap_or(false),
        };

        let store_path = raw
            .store
            .and_then(|s| s.path)
            .map(|p| resolve(base, p))
            .unwrap_or_else(|| base.join("sessions.jsonl"));

        let d = raw.distill.unwrap_or_default();
        let dd = DistillOptions::default();
        let failure_tolerance = d.failure_tolerance.unwrap_or(dd.failure_tolerance);
        if !(0.0..=1.0).contains(&failure_tolerance) {
            return Err(ConfigError::invalid("distill.failure_tolerance", "must be within [0, 1]"));
        }
        let distill = DistillOptions {
            parallelism: positive("distill.parallelism", d.parallelism, dd.parallelism as u64)? as usize,
            retry_budget: to_u32(
                "distill.retry_budget",
                non_negative("distill.retry_budget", d.retry_budget, dd.retry_budget as u64)?,
            )?,
            failure_tolerance,
            seed: d.seed.unwrap_or(dd.seed),
            question_field: d.question_field.unwrap_or(dd.question_field),
            label_field: d.label_field,
        };

        Ok(Config {
            endpoints,
            prompts,
            prompts_path,
            listgen,
            metrics,
            gateway,
            store_path,
            distill,
        })
    }
}
