//! Session records shared by the gateway, the store and the distillation
//! pipeline.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since the Unix epoch, UTC.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// One interaction: original input, transformed input, cloud response in
/// the transformed context and the restored response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionQuadruple {
    pub session_id: String,
    pub t_o: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat_o: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat_r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_r: Option<String>,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<u64>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InvariantError {
    #[error("session_id must be non-empty")]
    EmptyId,
    #[error("session {0}: t_o must be non-empty")]
    EmptyOriginal(String),
    #[error("session {0}: completed_at precedes created_at")]
    CompletedBeforeCreated(String),
    #[error("session {0}: t_r present without t_hat_r")]
    RestoredWithoutResponse(String),
}

impl SessionQuadruple {
    pub fn new(session_id: impl Into<String>, t_o: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            t_o: t_o.into(),
            t_hat_o: None,
            t_hat_r: None,
            t_r: None,
            created_at: now_ms(),
            completed_at: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.session_id.is_empty() {
            return Err(InvariantError::EmptyId);
        }
        if self.t_o.is_empty() {
            return Err(InvariantError::EmptyOriginal(self.session_id.clone()));
        }
        if let Some(done) = self.completed_at {
            if done < self.created_at {
                return Err(InvariantError::CompletedBeforeCreated(self.session_id.clone()));
            }
        }
        if self.t_r.is_some() && self.t_hat_r.is_none() {
            return Err(InvariantError::RestoredWithoutResponse(self.session_id.clone()));
        }
        Ok(())
    }

    /// All four texts present.
    pub fn is_complete(&self) -> bool {
        self.t_hat_o.is_some() && self.t_hat_r.is_some() && self.t_r.is_some()
    }
}

/// An encoder training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPair {
    pub id: String,
    pub t_o: String,
    pub t_hat_o: String,
}

impl ContextPair {
    pub fn is_valid(&self) -> bool {
        !self.id.is_empty() && !self.t_o.is_empty() && !self.t_hat_o.is_empty()
    }
}
