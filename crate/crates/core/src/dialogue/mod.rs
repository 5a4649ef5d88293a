//! The six-phase lesson state machine.
//!
//! Each student turn is either answered (and the lesson advances), turned
//! into a navigation event, or met with a confirmation question when the
//! classifier's confidence falls between the confirm and act thresholds.

mod scripts;

pub use scripts::{default_scripts, load_phase_scripts, parse_phase_scripts, PhaseScript, PHASE_COUNT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ChatMessage, ChatRole, ClassifyError, IntentClassifier, IntentPrediction, ReplyGenerator};
use crate::corpus::Intent;

pub const CONFIRMATION_QUESTION: &str =
    "It sounds like you want to stop this lesson and do something else. Is that right? (yes/no)";

const RESUME_PREFIX: &str = "No problem, let's keep going.";

const SYSTEM_PROMPT: &str = "You are a friendly maths tutor chatting with a student about the history of \
mathematics in Africa. Keep replies short, warm and encouraging, and follow the lesson plan one step at a time.";

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("expected {PHASE_COUNT} phases, found {0}")]
    WrongPhaseCount(usize),
    #[error("malformed phase script: {0}")]
    MalformedScript(String),
    #[error("invalid threshold policy: need 0 <= confirm <= act <= 1, got confirm={confirm}, act={act}")]
    InvalidPolicy { confirm: f64, act: f64 },
    #[error("conversation is already complete")]
    ConversationCompleted,
    #[error("reply generation failed: {0}")]
    Reply(ClassifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Active(u8),
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub conversation_id: String,
    pub phase: Phase,
    pub history: Vec<ChatMessage>,
    pub pending_confirmation: bool,
    pub confirmation_retries_used: u8,
}

impl DialogueState {
    pub fn phase_index(&self) -> Option<u8> {
        match self.phase {
            Phase::Active(p) => Some(p),
            Phase::Completed => None,
        }
    }

    pub fn is_completed(&self) -> bool {
        self.phase == Phase::Completed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigationKind {
    ChangeTopicRequested,
    ConversationComplete,
}

impl NavigationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NavigationKind::ChangeTopicRequested => "change_topic_requested",
            NavigationKind::ConversationComplete => "conversation_complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TurnOutcome {
    Reply { text: String },
    Navigation { kind: NavigationKind },
}

/// `confirm_threshold <= confidence < act_threshold` triggers a confirmation
/// question; at or above `act_threshold` the system navigates directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub act_threshold: f64,
    pub confirm_threshold: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            act_threshold: 0.75,
            confirm_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Act,
    Confirm,
    Continue,
}

impl ThresholdPolicy {
    pub fn new(act_threshold: f64, confirm_threshold: f64) -> Result<Self, DialogueError> {
        let p = ThresholdPolicy {
            act_threshold,
            confirm_threshold,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        if 0.0 <= self.confirm_threshold && self.confirm_threshold <= self.act_threshold && self.act_threshold <= 1.0 {
            Ok(())
        } else {
            Err(DialogueError::InvalidPolicy {
                confirm: self.confirm_threshold,
                act: self.act_threshold,
            })
        }
    }

    /// A `ChangeTopic` prediction without a confidence is acted on directly.
    pub fn route(&self, prediction: &IntentPrediction) -> Route {
        if prediction.intent != Intent::ChangeTopic {
            return Route::Continue;
        }
        match prediction.confidence {
            None => Route::Act,
            Some(c) if c >= self.act_threshold => Route::Act,
            Some(c) if c >= self.confirm_threshold => Route::Confirm,
            Some(_) => Route::Continue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confirmation {
    Yes,
    No,
    Unclear,
}

const YES_WORDS: &[&str] = &["yes", "y", "yeah", "yh", "ok", "okay", "sure", "yea", "yep"];
const NO_WORDS: &[&str] = &["no", "n", "nah", "nope", "continue", "keep going"];

pub fn parse_confirmation(text: &str) -> Confirmation {
    let t = text.trim().to_lowercase();
    if YES_WORDS.contains(&t.as_str()) {
        Confirmation::Yes
    } else if NO_WORDS.contains(&t.as_str()) {
        Confirmation::No
    } else {
        Confirmation::Unclear
    }
}

/// Chat context for classifying a message sent during `phase_index`.
pub fn lesson_context(scripts: &[PhaseScript], phase_index: u8) -> Vec<ChatMessage> {
    let mut context = vec![ChatMessage::system(SYSTEM_PROMPT)];
    if let Some(s) = scripts.iter().find(|s| s.index == phase_index) {
        context.push(ChatMessage::assistant(s.description.clone()));
    }
    context
}

fn navigation_marker(kind: NavigationKind) -> String {
    format!("[navigation: {}]", kind.as_str())
}

#[derive(Debug, Clone)]
pub struct DialogueEngine {
    scripts: Vec<PhaseScript>,
    policy: ThresholdPolicy,
}

impl Default for DialogueEngine {
    fn default() -> Self {
        DialogueEngine {
            scripts: default_scripts(),
            policy: ThresholdPolicy::default(),
        }
    }
}

impl DialogueEngine {
    pub fn new(scripts: Vec<PhaseScript>, policy: ThresholdPolicy) -> Result<Self, DialogueError> {
        let json = serde_json::to_string(&scripts).map_err(|e| DialogueError::MalformedScript(e.to_string()))?;
        let scripts = parse_phase_scripts(&json)?;
        policy.validate()?;
        Ok(DialogueEngine { scripts, policy })
    }

    pub fn policy(&self) -> ThresholdPolicy {
        self.policy
    }

    pub fn scripts(&self) -> &[PhaseScript] {
        &self.scripts
    }

    fn phase_text(&self, phase: u8) -> &str {
        &self.scripts[phase as usize - 1].description
    }

    /// A fresh conversation that has just presented phase 1.
    pub fn start(&self, conversation_id: impl Into<String>) -> DialogueState {
        DialogueState {
            conversation_id: conversation_id.into(),
            phase: Phase::Active(1),
            history: vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::assistant(self.phase_text(1))],
            pending_confirmation: false,
            confirmation_retries_used: 0,
        }
    }

    /// Routes one student message. The input state is left untouched; on
    /// success the returned state has exactly two more history entries.
    pub fn handle_turn(
        &self,
        state: &DialogueState,
        student_message: &str,
        classifier: &dyn IntentClassifier,
        replies: &dyn ReplyGenerator,
    ) -> Result<(DialogueState, TurnOutcome), DialogueError> {
        let Phase::Active(phase) = state.phase else {
            return Err(DialogueError::ConversationCompleted);
        };
        let mut next = state.clone();
        next.history.push(ChatMessage::user(student_message));

        if state.pending_confirmation {
            let resume = |next: &mut DialogueState| {
                next.pending_confirmation = false;
                next.confirmation_retries_used = 0;
                let text = format!("{RESUME_PREFIX} {}", self.phase_text(phase));
                next.history.push(ChatMessage::assistant(text.clone()));
                TurnOutcome::Reply { text }
            };
            let outcome = match parse_confirmation(student_message) {
                Confirmation::Yes => {
                    next.pending_confirmation = false;
                    next.confirmation_retries_used = 0;
                    self.navigate(&mut next, NavigationKind::ChangeTopicRequested)
                }
                Confirmation::No => resume(&mut next),
                Confirmation::Unclear if state.confirmation_retries_used == 0 => {
                    next.confirmation_retries_used = 1;
                    next.history.push(ChatMessage::assistant(CONFIRMATION_QUESTION));
                    TurnOutcome::Reply {
                        text: CONFIRMATION_QUESTION.into(),
                    }
                }
                Confirmation::Unclear => resume(&mut next),
            };
            return Ok((next, outcome));
        }

        let prediction = classifier.classify(&state.history, student_message).unwrap_or_else(|e| {
            log::warn!(
                "conversation {}: classifier failed ({e}); continuing the lesson",
                state.conversation_id
            );
            IntentPrediction {
                intent: Intent::Continue,
                confidence: None,
                latency_seconds: 0.0,
                raw: format!("error: {e}"),
            }
        });

        let outcome = match self.policy.route(&prediction) {
            Route::Act => self.navigate(&mut next, NavigationKind::ChangeTopicRequested),
            Route::Confirm => {
                next.pending_confirmation = true;
                next.confirmation_retries_used = 0;
                next.history.push(ChatMessage::assistant(CONFIRMATION_QUESTION));
                TurnOutcome::Reply {
                    text: CONFIRMATION_QUESTION.into(),
                }
            }
            Route::Continue if phase as usize == PHASE_COUNT => {
                next.phase = Phase::Completed;
                self.navigate(&mut next, NavigationKind::ConversationComplete)
            }
            Route::Continue => {
                let text = replies
                    .reply(&state.history, student_message, self.phase_text(phase + 1))
                    .map_err(DialogueError::Reply)?;
                next.phase = Phase::Active(phase + 1);
                next.history.push(ChatMessage::assistant(text.clone()));
                TurnOutcome::Reply { text }
            }
        };
        Ok((next, outcome))
    }

    fn navigate(&self, next: &mut DialogueState, kind: NavigationKind) -> TurnOutcome {
        next.history.push(ChatMessage {
            role: ChatRole::Assistant,
            content: navigation_marker(kind),
        });
        TurnOutcome::Navigation { kind }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ScriptedReplies;
    use crate::llm::{ScriptEntry, ScriptedClassifier};

    fn scripted(entries: Vec<ScriptEntry>) -> ScriptedClassifier {
        ScriptedClassifier::new("mock", entries).unwrap()
    }

    fn at_phase(engine: &DialogueEngine, phase: u8) -> DialogueState {
        let mut s = engine.start("c1");
        s.phase = Phase::Active(phase);
        s
    }

    struct FailingReplies;
    impl ReplyGenerator for FailingReplies {
        fn reply(&self, _: &[ChatMessage], _: &str, _: &str) -> Result<String, ClassifyError> {
            Err(ClassifyError::Transport("down".into()))
        }
    }

    #[test]
    fn confirmation_lexicon() {
        assert_eq!(parse_confirmation("Okay"), Confirmation::Yes);
        assert_eq!(parse_confirmation("  yh "), Confirmation::Yes);
        assert_eq!(parse_confirmation("keep going"), Confirmation::No);
        assert_eq!(parse_confirmation("NOPE"), Confirmation::No);
        assert_eq!(parse_confirmation("what?"), Confirmation::Unclear);
        assert_eq!(parse_confirmation("yes please"), Confirmation::Unclear);
    }

    #[test]
    fn high_confidence_navigates_without_advancing() {
        let engine = DialogueEngine::default();
        let s = at_phase(&engine, 3);
        let clf = scripted(vec![ScriptEntry::scored(Intent::ChangeTopic, 0.95)]);
        let (next, out) = engine.handle_turn(&s, "I want to stop", &clf, &ScriptedReplies).unwrap();
        assert_eq!(
            out,
            TurnOutcome::Navigation {
                kind: NavigationKind::ChangeTopicRequested
            }
        );
        assert_eq!(next.phase, Phase::Active(3));
        assert_eq!(next.history.len(), s.history.len() + 2);
    }

    #[test]
    fn mid_confidence_asks_then_yh_confirms() {
        let engine = DialogueEngine::default();
        let s = at_phase(&engine, 3);
        let clf = scripted(vec![ScriptEntry::scored(Intent::ChangeTopic, 0.6)]);
        let (s1, out) = engine.handle_turn(&s, "teach me", &clf, &ScriptedReplies).unwrap();
        assert_eq!(
            out,
            TurnOutcome::Reply {
                text: CONFIRMATION_QUESTION.into()
            }
        );
        assert!(s1.pending_confirmation);
        assert_eq!(s1.history.last().unwrap().content, CONFIRMATION_QUESTION);

        let (s2, out) = engine.handle_turn(&s1, "yh", &clf, &ScriptedReplies).unwrap();
        assert!(matches!(
            out,
            TurnOutcome::Navigation {
                kind: NavigationKind::ChangeTopicRequested
            }
        ));
        assert!(!s2.pending_confirmation);
        assert_eq!(s2.phase, Phase::Active(3));
    }

    #[test]
    fn unclear_answer_gets_one_retry_then_resumes() {
        let engine = DialogueEngine::default();
        let clf = scripted(vec![ScriptEntry::scored(Intent::ChangeTopic, 0.6)]);
        let (s1, _) = engine.handle_turn(&at_phase(&engine, 2), "hmm", &clf, &ScriptedReplies).unwrap();
        let (s2, out) = engine.handle_turn(&s1, "what?", &clf, &ScriptedReplies).unwrap();
        assert_eq!(
            out,
            TurnOutcome::Reply {
                text: CONFIRMATION_QUESTION.into()
            }
        );
        assert!(s2.pending_confirmation);
        assert_eq!(s2.confirmation_retries_used, 1);
        let (s3, out) = engine.handle_turn(&s2, "idk", &clf, &ScriptedReplies).unwrap();
        match out {
            TurnOutcome::Reply { text } => assert!(text.contains("How old do you think maths is?")),
            other => panic!("{other:?}"),
        }
        assert!(!s3.pending_confirmation);
        assert_eq!(s3.confirmation_retries_used, 0);
        assert_eq!(s3.phase, Phase::Active(2));
    }

    #[test]
    fn no_resumes_current_phase() {
        let engine = DialogueEngine::default();
        let clf = scripted(vec![ScriptEntry::scored(Intent::ChangeTopic, 0.55)]);
        let (s1, _) = engine.handle_turn(&at_phase(&engine, 4), "hmm", &clf, &ScriptedReplies).unwrap();
        let (s2, out) = engine.handle_turn(&s1, "no", &clf, &ScriptedReplies).unwrap();
        assert!(matches!(out, TurnOutcome::Reply { text } if text.contains("Timbuktu")));
        assert_eq!(s2.phase, Phase::Active(4));
        assert!(!s2.pending_confirmation);
    }

    #[test]
    fn six_continues_complete_the_lesson() {
        let engine = DialogueEngine::default();
        let clf = scripted(vec![ScriptEntry::intent(Intent::Continue); 6]);
        let mut s = engine.start("c");
        for turn in 1..=6 {
            let (next, out) = engine.handle_turn(&s, "yes", &clf, &ScriptedReplies).unwrap();
            if turn < 6 {
                assert_eq!(next.phase, Phase::Active(turn + 1));
                assert!(matches!(out, TurnOutcome::Reply { .. }));
            } else {
                assert_eq!(next.phase, Phase::Completed);
                assert_eq!(
                    out,
                    TurnOutcome::Navigation {
                        kind: NavigationKind::ConversationComplete
                    }
                );
            }
            s = next;
        }
        assert!(matches!(
            engine.handle_turn(&s, "hi", &clf, &ScriptedReplies),
            Err(DialogueError::ConversationCompleted)
        ));
    }

    #[test]
    fn classifier_failure_fails_open() {
        let engine = DialogueEngine::default();
        let clf = scripted(vec![ScriptEntry::ToolCall {
            tool_call: "delete_account".into(),
        }]);
        let (next, out) = engine.handle_turn(&engine.start("c"), "yes", &clf, &ScriptedReplies).unwrap();
        assert!(matches!(out, TurnOutcome::Reply { .. }));
        assert_eq!(next.phase, Phase::Active(2));
    }

    #[test]
    fn reply_failure_surfaces_and_keeps_state() {
        let engine = DialogueEngine::default();
        let clf = scripted(vec![ScriptEntry::intent(Intent::Continue)]);
        let s = engine.start("c");
        assert!(matches!(
            engine.handle_turn(&s, "yes", &clf, &FailingReplies),
            Err(DialogueError::Reply(_))
        ));
    }

    #[test]
    fn absent_confidence_acts_and_low_confidence_continues() {
        let engine = DialogueEngine::default();
        let clf = scripted(vec![ScriptEntry::Reply("<exit>".into()), ScriptEntry::scored(Intent::ChangeTopic, 0.3)]);
        let (_, out) = engine.handle_turn(&engine.start("c"), "stop", &clf, &ScriptedReplies).unwrap();
        assert!(matches!(out, TurnOutcome::Navigation { .. }));
        let (next, out) = engine.handle_turn(&engine.start("c"), "hmm", &clf, &ScriptedReplies).unwrap();
        assert!(matches!(out, TurnOutcome::Reply { .. }));
        assert_eq!(next.phase, Phase::Active(2));
    }

    #[test]
    fn policy_validation() {
        assert!(ThresholdPolicy::new(0.75, 0.5).is_ok());
        assert!(ThresholdPolicy::new(0.5, 0.75).is_err());
        assert!(ThresholdPolicy::new(1.5, 0.5).is_err());
    }

    #[test]
    fn state_serializes() {
        let engine = DialogueEngine::default();
        let s = engine.start("c9");
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"active\":1"));
        let back: DialogueState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
