//! Remote intent detection over an OpenAI-compatible chat-completion API.
//!
//! Two strategies share one HTTP client:
//! - sentinel: the system prompt asks the model to answer `<exit>` instead of
//!   replying when the student wants out;
//! - function calling: the model is offered a `change_topic` tool.
//!
//! Neither produces a confidence, so predictions carry `confidence: None`.

mod client;
mod mock;
mod wire;

pub use client::{decide_function_call, ChatClient, FunctionCallClassifier, LlmReplies, SentinelClassifier};
pub use mock::{ScriptEntry, ScriptedClassifier};
pub use wire::{parse_chat_response, ChatRequest, ToolCallSpec};

use serde::{Deserialize, Serialize};

/// Appended to the lesson system prompt for the sentinel strategy.
pub const SENTINEL_CLAUSE: &str = "If the user indicates that they want to exit the conversation or change the topic, reply with the text <exit> instead of responding to the student.";

pub const SENTINEL: &str = "<exit>";

pub const CHANGE_TOPIC_TOOL: &str = "change_topic";

pub const CHANGE_TOPIC_DESCRIPTION: &str = "This function logs that the user wishes to change the topic of conversation from the current discussion to something unrelated.";

/// A reply signals `ChangeTopic` iff, after trimming, it contains `<exit>`
/// case-insensitively.
pub fn sentinel_fires(reply: &str) -> bool {
    reply.trim().to_lowercase().contains(SENTINEL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_backoff")]
    pub retry_base_seconds: f64,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> f64 {
    0.5
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            timeout_seconds: default_timeout(),
            max_retries: default_retries(),
            api_key_env: None,
            retry_base_seconds: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(format!("timeout_seconds must be positive, got {}", self.timeout_seconds));
        }
        if self.retry_base_seconds.is_nan() || self.retry_base_seconds < 0.0 {
            return Err("retry_base_seconds must be non-negative".into());
        }
        if self.endpoint_url.is_empty() {
            return Err("endpoint_url is empty".into());
        }
        Ok(())
    }
}

/// Tool offered to the model in function-calling mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

impl Default for ToolSchema {
    fn default() -> Self {
        ToolSchema {
            name: CHANGE_TOPIC_TOOL.into(),
            description: CHANGE_TOPIC_DESCRIPTION.into(),
            parameters: serde_json::json!({"type": "object", "properties": {}}),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Text,
    ToolCall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub kind: ResponseKind,
    /// Reply text, or the first invoked tool's name for `ToolCall`.
    pub content: String,
    /// Names of every tool the model invoked, in order.
    pub tool_calls: Vec<String>,
    pub latency_seconds: f64,
    pub http_status: u16,
}
