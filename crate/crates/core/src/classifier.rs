//! The backend-agnostic classifier interface shared by the forest, the remote
//! chat-model strategies and the scripted mock.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Intent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

/// Result of classifying one student message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub intent: Intent,
    /// Probability of `ChangeTopic`, when the backend produces one.
    pub confidence: Option<f64>,
    pub latency_seconds: f64,
    /// Backend diagnostic payload (reply text, tool name, ...).
    pub raw: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClassifyError {
    #[error("request timed out after {elapsed:?}")]
    Timeout { elapsed: Duration },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("model invoked a tool that was not offered: {0:?}")]
    UnknownToolInvoked(String),
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl ClassifyError {
    /// Transport failures, 429 and 5xx are retried; content errors are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClassifyError::Timeout { .. } | ClassifyError::Transport(_) => true,
            ClassifyError::HttpStatus(s) => *s == 429 || (500..600).contains(s),
            _ => false,
        }
    }
}

/// `(context, message) -> IntentPrediction`. Dialogue routing and the bench
/// harness only see this trait.
pub trait IntentClassifier: Send + Sync {
    /// Short label used in reports and `/health`.
    fn label(&self) -> String;

    fn classify(&self, context: &[ChatMessage], message: &str) -> Result<IntentPrediction, ClassifyError>;

    /// One untimed call before latency measurement starts.
    fn warm_up(&self) {
        let _ = self.classify(&[], "hello");
    }
}

impl<T: IntentClassifier + ?Sized> IntentClassifier for std::sync::Arc<T> {
    fn label(&self) -> String {
        (**self).label()
    }

    fn classify(&self, context: &[ChatMessage], message: &str) -> Result<IntentPrediction, ClassifyError> {
        (**self).classify(context, message)
    }

    fn warm_up(&self) {
        (**self).warm_up()
    }
}

/// Generates the tutor's reply on the Continue path.
pub trait ReplyGenerator: Send + Sync {
    fn reply(&self, context: &[ChatMessage], message: &str, next_phase: &str) -> Result<String, ClassifyError>;
}

impl<T: ReplyGenerator + ?Sized> ReplyGenerator for std::sync::Arc<T> {
    fn reply(&self, context: &[ChatMessage], message: &str, next_phase: &str) -> Result<String, ClassifyError> {
        (**self).reply(context, message, next_phase)
    }
}

/// Replies with the next phase's scripted content; no model involved.
#[derive(Debug, Clone, Default)]
pub struct ScriptedReplies;

impl ReplyGenerator for ScriptedReplies {
    fn reply(&self, _context: &[ChatMessage], _message: &str, next_phase: &str) -> Result<String, ClassifyError> {
        Ok(next_phase.to_string())
    }
}
