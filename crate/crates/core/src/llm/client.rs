use std::time::{Duration, Instant};

use super::wire::{parse_chat_response, ChatRequest};
use super::{sentinel_fires, BackendConfig, BackendResponse, ResponseKind, ToolSchema, SENTINEL_CLAUSE};
use crate::classifier::{ChatMessage, ChatRole, ClassifyError, IntentClassifier, IntentPrediction, ReplyGenerator};
use crate::corpus::Intent;

/// Blocking chat-completion client with per-request deadline and
/// exponential backoff on transport errors, 429 and 5xx.
#[derive(Debug, Clone)]
pub struct ChatClient {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(config: BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        ChatClient { config, agent }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn api_key(&self) -> Result<Option<String>, ClassifyError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ClassifyError::Auth(format!("environment variable {var} is not set"))),
        }
    }

    fn attempt(&self, request: &ChatRequest, key: Option<&str>) -> Result<(u16, String), ClassifyError> {
        let started = Instant::now();
        let mut call = self.agent.post(&self.config.endpoint_url);
        if let Some(k) = key {
            call = call.header("Authorization", &format!("Bearer {k}"));
        }
        let mut response = call.send_json(request).map_err(|e| self.transport_error(e, started))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.transport_error(e, started))?;
        match status {
            200..=299 => Ok((status, body)),
            401 | 403 => Err(ClassifyError::Auth(format!("HTTP {status}"))),
            s => Err(ClassifyError::HttpStatus(s)),
        }
    }

    fn transport_error(&self, e: ureq::Error, started: Instant) -> ClassifyError {
        let elapsed = started.elapsed();
        let timed_out = match &e {
            ureq::Error::Timeout(_) => true,
            ureq::Error::Io(io) => matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock),
            _ => false,
        };
        if timed_out {
            ClassifyError::Timeout { elapsed }
        } else {
            ClassifyError::Transport(e.to_string())
        }
    }

    /// Sends one chat request, retrying retryable failures up to
    /// `max_retries` times. Latency covers the whole exchange.
    pub fn complete(&self, messages: Vec<ChatMessage>, tools: Option<&[ToolSchema]>) -> Result<BackendResponse, ClassifyError> {
        let key = self.api_key()?;
        let request = ChatRequest {
            model: self.config.model_name.clone(),
            messages,
            tools: tools.map(|ts| ts.iter().map(Into::into).collect()),
        };
        let started = Instant::now();
        let mut attempt = 0u32;
        let (status, body) = loop {
            match self.attempt(&request, key.as_deref()) {
                Ok(ok) => break ok,
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.retry_base_seconds * 2f64.powi(attempt as i32);
                    log::warn!("chat request failed ({e}); retry {} in {delay:.2}s", attempt + 1);
                    std::thread::sleep(Duration::from_secs_f64(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let (kind, content, tool_calls) = parse_chat_response(&body)?;
        Ok(BackendResponse {
            kind,
            content,
            tool_calls,
            latency_seconds: started.elapsed().as_secs_f64().max(1e-9),
            http_status: status,
        })
    }

    /// Assistant text for the Continue path. Returns the reply and latency.
    pub fn chat_reply(&self, context: &[ChatMessage], student_message: &str) -> Result<(String, f64), ClassifyError> {
        let mut messages = context.to_vec();
        messages.push(ChatMessage::user(student_message));
        let r = self.complete(messages, None)?;
        match r.kind {
            ResponseKind::Text => Ok((r.content, r.latency_seconds)),
            ResponseKind::ToolCall => Err(ClassifyError::MalformedResponse(format!(
                "expected a text reply, model called {}",
                r.content
            ))),
        }
    }
}

/// Ensures the context opens with a system message carrying the sentinel
/// instruction.
fn with_sentinel_clause(context: &[ChatMessage]) -> Vec<ChatMessage> {
    let mut messages = context.to_vec();
    match messages.first_mut() {
        Some(first) if first.role == ChatRole::System => {
            if !first.content.contains(SENTINEL_CLAUSE) {
                first.content = format!("{}\n\n{SENTINEL_CLAUSE}", first.content.trim_end());
            }
        }
        _ => messages.insert(0, ChatMessage::system(SENTINEL_CLAUSE)),
    }
    messages
}

#[derive(Debug, Clone)]
pub struct SentinelClassifier {
    pub client: ChatClient,
    pub label: String,
}

impl SentinelClassifier {
    pub fn new(config: BackendConfig) -> Self {
        let label = config.model_name.clone();
        SentinelClassifier {
            client: ChatClient::new(config),
            label,
        }
    }
}

impl IntentClassifier for SentinelClassifier {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn classify(&self, context: &[ChatMessage], message: &str) -> Result<IntentPrediction, ClassifyError> {
        let mut messages = with_sentinel_clause(context);
        messages.push(ChatMessage::user(message));
        let r = self.client.complete(messages, None)?;
        if r.kind == ResponseKind::ToolCall {
            return Err(ClassifyError::UnknownToolInvoked(r.content));
        }
        let intent = if sentinel_fires(&r.content) {
            Intent::ChangeTopic
        } else {
            Intent::Continue
        };
        Ok(IntentPrediction {
            intent,
            confidence: None,
            latency_seconds: r.latency_seconds,
            raw: r.content,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FunctionCallClassifier {
    pub client: ChatClient,
    pub tool: ToolSchema,
    pub label: String,
}

impl FunctionCallClassifier {
    pub fn new(config: BackendConfig, tool: ToolSchema) -> Self {
        let label = format!("{} (Function calling)", config.model_name);
        FunctionCallClassifier {
            client: ChatClient::new(config),
            tool,
            label,
        }
    }
}

/// Any invoked tool other than the offered one is an error; an invocation of
/// the offered tool decides `ChangeTopic` even when text accompanies it.
pub fn decide_function_call(r: &BackendResponse, offered: &str) -> Result<Intent, ClassifyError> {
    if let Some(unknown) = r.tool_calls.iter().find(|t| t.as_str() != offered) {
        return Err(ClassifyError::UnknownToolInvoked(unknown.clone()));
    }
    if r.tool_calls.is_empty() {
        Ok(Intent::Continue)
    } else {
        Ok(Intent::ChangeTopic)
    }
}

impl IntentClassifier for FunctionCallClassifier {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn classify(&self, context: &[ChatMessage], message: &str) -> Result<IntentPrediction, ClassifyError> {
        let mut messages = context.to_vec();
        messages.push(ChatMessage::user(message));
        let r = self.client.complete(messages, Some(std::slice::from_ref(&self.tool)))?;
        let intent = decide_function_call(&r, &self.tool.name)?;
        Ok(IntentPrediction {
            intent,
            confidence: None,
            latency_seconds: r.latency_seconds,
            raw: r.content,
        })
    }
}

/// Continue-path replies from the chat model. The next phase's content is
/// appended to the system prompt as the tutor's next step.
#[derive(Debug, Clone)]
pub struct LlmReplies {
    pub client: ChatClient,
}

impl ReplyGenerator for LlmReplies {
    fn reply(&self, context: &[ChatMessage], message: &str, next_phase: &str) -> Result<String, ClassifyError> {
        let mut messages = context.to_vec();
        messages.push(ChatMessage::system(format!(
            "Respond briefly to the student, then continue the lesson with: {next_phase}"
        )));
        self.client.chat_reply(&messages, message).map(|(text, _)| text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(tools: &[&str], content: &str) -> BackendResponse {
        BackendResponse {
            kind: if tools.is_empty() { ResponseKind::Text } else { ResponseKind::ToolCall },
            content: content.into(),
            tool_calls: tools.iter().map(|s| s.to_string()).collect(),
            latency_seconds: 0.1,
            http_status: 200,
        }
    }

    #[test]
    fn function_call_decision_table() {
        let cases: [(&[&str], Result<Intent, ClassifyError>); 5] = [
            (&["change_topic"], Ok(Intent::ChangeTopic)),
            (&[], Ok(Intent::Continue)),
            (&["change_topic", "change_topic"], Ok(Intent::ChangeTopic)),
            (&["delete_account"], Err(ClassifyError::UnknownToolInvoked("delete_account".into()))),
            (&["change_topic", "delete_account"], Err(ClassifyError::UnknownToolInvoked("delete_account".into()))),
        ];
        for (tools, want) in cases {
            assert_eq!(decide_function_call(&response(tools, "x"), "change_topic"), want, "{tools:?}");
        }
    }

    #[test]
    fn sentinel_clause_injection() {
        let ctx = vec![ChatMessage::system("Teach maths history."), ChatMessage::assistant("Hi")];
        let out = with_sentinel_clause(&ctx);
        assert_eq!(out.len(), 2);
        assert!(out[0].content.starts_with("Teach maths history."));
        assert!(out[0].content.ends_with(SENTINEL_CLAUSE));
        assert_eq!(with_sentinel_clause(&out), out);

        let bare = with_sentinel_clause(&[ChatMessage::user("hi")]);
        assert_eq!(bare[0], ChatMessage::system(SENTINEL_CLAUSE));
    }

    #[test]
    fn missing_key_env_is_auth_error() {
        let mut cfg = BackendConfig::new("http://127.0.0.1:9/v1/chat/completions", "m");
        cfg.api_key_env = Some("TUTOR_INTENT_TEST_KEY_THAT_IS_NOT_SET".into());
        let c = ChatClient::new(cfg);
        assert!(matches!(c.complete(vec![], None), Err(ClassifyError::Auth(_))));
    }
}
