//! Annotated student-message datasets: loading, validation, splitting,
//! agreement statistics and a synthetic generator for hermetic tests.

mod agreement;
mod split;
mod synth;

pub use agreement::{annotation_pairs, compute_agreement, AgreementReport};
pub use split::{split_dataset, SplitRatios, SplitResult};
pub use synth::{generate_synthetic_corpus, CHANGE_TEMPLATES, CONTINUE_TEMPLATES};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The two intents a student message can carry. `ChangeTopic` is the
/// positive class everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Continue,
    ChangeTopic,
}

impl Intent {
    pub const ALL: [Intent; 2] = [Intent::Continue, Intent::ChangeTopic];

    /// Dense class index used by the forest (`Continue` = 0).
    pub fn index(self) -> usize {
        match self {
            Intent::Continue => 0,
            Intent::ChangeTopic => 1,
        }
    }

    pub fn from_index(i: usize) -> Intent {
        if i == 0 {
            Intent::Continue
        } else {
            Intent::ChangeTopic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Continue => "continue",
            Intent::ChangeTopic => "change_topic",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Intent::ChangeTopic
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Intent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "continue" => Ok(Intent::Continue),
            "change_topic" => Ok(Intent::ChangeTopic),
            other => Err(format!("unknown intent label {other:?}")),
        }
    }
}

/// One annotator's label for a message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator: String,
    pub label: Intent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledMessage {
    pub conversation_id: String,
    pub message_id: String,
    pub text: String,
    pub phase_index: Option<u8>,
    /// Adjudicated label; authoritative when the annotations disagree.
    pub label: Intent,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl LabeledMessage {
    fn validate(&self) -> Result<(), String> {
        if self.message_id.is_empty() {
            return Err("message_id is empty".into());
        }
        if self.conversation_id.is_empty() {
            return Err("conversation_id is empty".into());
        }
        if self.text.trim().is_empty() {
            return Err("text is empty after trimming".into());
        }
        if let Some(p) = self.phase_index {
            if !(1..=6).contains(&p) {
                return Err(format!("phase_index {p} outside 1..6"));
            }
        }
        if self.annotations.len() > 2 {
            return Err(format!("{} annotations, at most 2 allowed", self.annotations.len()));
        }
        if let [a, b] = self.annotations.as_slice() {
            if a.label == b.label && a.label != self.label {
                return Err(format!(
                    "label {} contradicts unanimous annotations ({})",
                    self.label, a.label
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duplicate message_id {id:?}")]
    DuplicateMessageId { line: usize, id: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("grouped split needs at least 3 conversations, found {0}")]
    TooFewGroups(usize),
    #[error("positive rate must lie strictly between 0 and 1, got {0}")]
    InvalidRate(f64),
    #[error("synthetic corpus needs n >= 20, got {0}")]
    TooSmall(usize),
    #[error("agreement needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("kappa undefined: expected agreement is 1 (both annotators constant and equal)")]
    DegenerateMarginals,
    #[error("split references unknown message_id {0:?}")]
    UnknownMessageId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// An ordered collection of labeled messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub messages: Vec<LabeledMessage>,
    pub source_path: String,
}

impl Dataset {
    /// Validates messages and builds a dataset. Line numbers in errors are
    /// 1-based positions in `messages`.
    pub fn new(messages: Vec<LabeledMessage>, source_path: impl Into<String>) -> Result<Self, CorpusError> {
        if messages.is_empty() {
            return Err(CorpusError::EmptyDataset);
        }
        let mut seen = HashSet::with_capacity(messages.len());
        for (i, m) in messages.iter().enumerate() {
            m.validate()
                .map_err(|reason| CorpusError::MalformedRecord { line: i + 1, reason })?;
            if !seen.insert(m.message_id.as_str()) {
                return Err(CorpusError::DuplicateMessageId {
                    line: i + 1,
                    id: m.message_id.clone(),
                });
            }
        }
        Ok(Dataset {
            messages,
            source_path: source_path.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Conversation ids in order of first appearance.
    pub fn conversation_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.messages
            .iter()
            .map(|m| m.conversation_id.as_str())
            .filter(|c| seen.insert(*c))
            .collect()
    }

    /// Messages whose ids are listed, in the order of `ids`.
    pub fn subset(&self, ids: &[String]) -> Result<Dataset, CorpusError> {
        let index: std::collections::HashMap<&str, &LabeledMessage> =
            self.messages.iter().map(|m| (m.message_id.as_str(), m)).collect();
        let messages = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|m| (*m).clone())
                    .ok_or_else(|| CorpusError::UnknownMessageId(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::new(messages, self.source_path.clone())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.messages.iter().map(|m| m.text.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<Intent> {
        self.messages.iter().map(|m| m.label).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }
}

/// Parses JSON-lines text into a validated dataset. Blank lines are skipped.
pub fn parse_dataset(text: &str, source_path: &str) -> Result<Dataset, CorpusError> {
    let mut messages = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let m: LabeledMessage = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        m.validate()
            .map_err(|reason| CorpusError::MalformedRecord { line: line_no, reason })?;
        if !seen.insert(m.message_id.clone()) {
            return Err(CorpusError::DuplicateMessageId {
                line: line_no,
                id: m.message_id,
            });
        }
        messages.push(m);
    }
    if messages.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    Ok(Dataset {
        messages,
        source_path: source_path.to_string(),
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, &path.display().to_string())
}

/// Fraction of messages labeled `ChangeTopic`.
pub fn class_balance(dataset: &Dataset) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let positives = dataset.messages.iter().filter(|m| m.label.is_positive()).count();
    positives as f64 / dataset.len() as f64
}

#[cfg(test)]
pub(crate) fn msg(conv: &str, id: &str, text: &str, label: Intent) -> LabeledMessage {
    LabeledMessage {
        conversation_id: conv.into(),
        message_id: id.into(),
        text: text.into(),
        phase_index: None,
        label,
        annotations: vec![],
    }
}
