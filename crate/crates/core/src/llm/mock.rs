use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{sentinel_fires, CHANGE_TOPIC_TOOL};
use crate::classifier::{ChatMessage, ClassifyError, IntentClassifier, IntentPrediction};
use crate::corpus::Intent;

/// One scripted backend answer. In JSON a bare string is a model reply
/// (parsed with the sentinel rule), `{"tool_call": name}` is a tool
/// invocation, and `{"intent": ..., "confidence": ...}` is a direct result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Reply(String),
    ToolCall { tool_call: String },
    Prediction { intent: Intent, confidence: Option<f64> },
}

impl ScriptEntry {
    pub fn intent(intent: Intent) -> Self {
        ScriptEntry::Prediction {
            intent,
            confidence: None,
        }
    }

    pub fn scored(intent: Intent, confidence: f64) -> Self {
        ScriptEntry::Prediction {
            intent,
            confidence: Some(confidence),
        }
    }
}

/// Replays a fixed script through the classifier interface, one entry per
/// call, with optional artificial latency.
#[derive(Debug)]
pub struct ScriptedClassifier {
    label: String,
    script: Mutex<VecDeque<ScriptEntry>>,
    latency: Duration,
    repeat: bool,
}

impl ScriptedClassifier {
    pub fn new(label: impl Into<String>, script: Vec<ScriptEntry>) -> Result<Self, ClassifyError> {
        if script.is_empty() {
            return Err(ClassifyError::ScriptExhausted);
        }
        Ok(ScriptedClassifier {
            label: label.into(),
            script: Mutex::new(script.into()),
            latency: Duration::ZERO,
            repeat: false,
        })
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Cycles through the script instead of running out.
    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    pub fn from_json(label: impl Into<String>, json: &str) -> Result<Self, String> {
        let script: Vec<ScriptEntry> = serde_json::from_str(json).map_err(|e| e.to_string())?;
        Self::new(label, script).map_err(|_| "script is empty".to_string())
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script lock").len()
    }
}

impl IntentClassifier for ScriptedClassifier {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn classify(&self, _context: &[ChatMessage], _message: &str) -> Result<IntentPrediction, ClassifyError> {
        let start = Instant::now();
        let entry = {
            let mut script = self.script.lock().expect("script lock");
            let entry = script.pop_front().ok_or(ClassifyError::ScriptExhausted)?;
            if self.repeat {
                script.push_back(entry.clone());
            }
            entry
        };
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let (intent, confidence, raw) = match entry {
            ScriptEntry::Reply(text) => {
                let intent = if sentinel_fires(&text) {
                    Intent::ChangeTopic
                } else {
                    Intent::Continue
                };
                (intent, None, text)
            }
            ScriptEntry::ToolCall { tool_call } => {
                if tool_call != CHANGE_TOPIC_TOOL {
                    return Err(ClassifyError::UnknownToolInvoked(tool_call));
                }
                (Intent::ChangeTopic, None, tool_call)
            }
            ScriptEntry::Prediction { intent, confidence } => (intent, confidence, String::new()),
        };
        Ok(IntentPrediction {
            intent,
            confidence,
            latency_seconds: start.elapsed().as_secs_f64().max(1e-9),
            raw,
        })
    }

    /// Warm-up would consume a script entry, so it is skipped.
    fn warm_up(&self) {}
}
