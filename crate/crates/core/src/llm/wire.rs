//! Chat-completion JSON shapes.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ResponseKind, ToolSchema};
use crate::classifier::{ChatMessage, ClassifyError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ToolCallSpec {
    #[serde(rename = "type")]
    pub kind: String,
    pub function: FunctionSpec,
}

impl From<&ToolSchema> for ToolCallSpec {
    fn from(t: &ToolSchema) -> Self {
        ToolCallSpec {
            kind: "function".into(),
            function: FunctionSpec {
                name: t.name.clone(),
                description: t.description.clone(),
                parameters: t.parameters.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tools: Option<Vec<ToolCallSpec>>,
}

#[derive(Debug, Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Option<Vec<ToolCall>>,
}

#[derive(Debug, Deserialize)]
struct ToolCall {
    function: ToolFunction,
}

#[derive(Debug, Deserialize)]
struct ToolFunction {
    name: String,
}

/// Extracts `(kind, content, tool names)` from `choices[0].message`.
pub fn parse_chat_response(body: &str) -> Result<(ResponseKind, String, Vec<String>), ClassifyError> {
    let parsed: ResponseBody =
        serde_json::from_str(body).map_err(|e| ClassifyError::MalformedResponse(e.to_string()))?;
    let message = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ClassifyError::MalformedResponse("no choices".into()))?
        .message;
    let tools: Vec<String> = message
        .tool_calls
        .unwrap_or_default()
        .into_iter()
        .map(|c| c.function.name)
        .collect();
    if let Some(first) = tools.first() {
        return Ok((ResponseKind::ToolCall, first.clone(), tools));
    }
    match message.content {
        Some(text) => Ok((ResponseKind::Text, text, tools)),
        None => Err(ClassifyError::MalformedResponse("message has neither content nor tool_calls".into())),
    }
}
