use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DialogueError;

pub const PHASE_COUNT: usize = 6;

const BUNDLED: &str = include_str!("../../assets/phase_scripts.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseScript {
    pub index: u8,
    pub description: String,
    #[serde(default)]
    pub example_responses: Vec<String>,
}

/// Validates a phase list: exactly six phases with indices 1..=6, sorted.
pub fn parse_phase_scripts(json: &str) -> Result<Vec<PhaseScript>, DialogueError> {
    let mut scripts: Vec<PhaseScript> =
        serde_json::from_str(json).map_err(|e| DialogueError::MalformedScript(e.to_string()))?;
    scripts.sort_by_key(|s| s.index);
    for w in scripts.windows(2) {
        if w[0].index == w[1].index {
            return Err(DialogueError::MalformedScript(format!("duplicate phase index {}", w[0].index)));
        }
    }
    if scripts.len() != PHASE_COUNT {
        return Err(DialogueError::WrongPhaseCount(scripts.len()));
    }
    for (i, s) in scripts.iter().enumerate() {
        if s.index as usize != i + 1 {
            return Err(DialogueError::MalformedScript(format!(
                "phase indices must be 1..={PHASE_COUNT}, found {}",
                s.index
            )));
        }
        if s.description.trim().is_empty() {
            return Err(DialogueError::MalformedScript(format!("phase {} has no description", s.index)));
        }
    }
    Ok(scripts)
}

pub fn load_phase_scripts(path: impl AsRef<Path>) -> Result<Vec<PhaseScript>, DialogueError> {
    parse_phase_scripts(&std::fs::read_to_string(path)?)
}

/// The math-history lesson shipped with the crate.
pub fn default_scripts() -> Vec<PhaseScript> {
    parse_phase_scripts(BUNDLED).expect("bundled phase scripts are valid")
}
