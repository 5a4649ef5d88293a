//! C ABI over `tutor_intent`.
//!
//! Conventions:
//! - every fallible function returns a `TiStatus`; results go through out
//!   pointers that are written only on `TI_STATUS_OK`;
//! - on failure `ti_last_error_message` describes the error for the calling
//!   thread until its next failing call;
//! - strings passed in are NUL-terminated UTF-8; strings handed out are owned
//!   by the caller and released with `ti_string_free`;
//! - handles are opaque and released with their `*_free` function; passing
//!   NULL to a free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use tutor_intent::bench::{metrics_from_confusion, ConfusionMatrix};
use tutor_intent::classifier::{ChatMessage, ClassifyError, IntentClassifier, IntentPrediction, ScriptedReplies};
use tutor_intent::corpus::{compute_agreement, Intent};
use tutor_intent::dialogue::{
    default_scripts, DialogueEngine, DialogueState, NavigationKind, Phase, ThresholdPolicy, TurnOutcome, PHASE_COUNT,
};
use tutor_intent::forest::{ForestClassifier, ModelFile};
use tutor_intent::llm::sentinel_fires;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidModel = 4,
    InvalidArgument = 5,
    ClassifyFailed = 6,
    ConversationComplete = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiIntent {
    Continue = 0,
    ChangeTopic = 1,
}

impl From<Intent> for TiIntent {
    fn from(i: Intent) -> Self {
        match i {
            Intent::Continue => TiIntent::Continue,
            Intent::ChangeTopic => TiIntent::ChangeTopic,
        }
    }
}

impl TryFrom<i32> for TiIntent {
    type Error = ();

    fn try_from(v: i32) -> Result<Self, ()> {
        match v {
            0 => Ok(TiIntent::Continue),
            1 => Ok(TiIntent::ChangeTopic),
            _ => Err(()),
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiTurnKind {
    Reply = 0,
    ChangeTopicRequested = 1,
    ConversationComplete = 2,
}

/// Metric suite for one confusion matrix. `undefined_mask` has bit i set
/// when the i-th field (in declaration order, from `macro_f1`) hit a zero
/// denominator and was reported as 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TiMetrics {
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub change_precision: f64,
    pub change_recall: f64,
    pub change_f1: f64,
    pub continue_precision: f64,
    pub continue_recall: f64,
    pub continue_f1: f64,
    pub undefined_mask: u32,
}

const METRIC_FIELDS: [&str; 9] = [
    "macro_f1",
    "macro_precision",
    "macro_recall",
    "change_precision",
    "change_recall",
    "change_f1",
    "continue_precision",
    "continue_recall",
    "continue_f1",
];

/// Opaque forest model handle.
pub struct TiModel {
    inner: Arc<ForestClassifier>,
}

/// Opaque dialogue session handle.
pub struct TiSession {
    engine: DialogueEngine,
    classifier: Arc<ForestClassifier>,
    state: DialogueState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior NUL"));
}

fn fail(status: TiStatus, message: impl Into<String>) -> TiStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> TiStatus) -> TiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(TiStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, TiStatus> {
    if p.is_null() {
        return Err(fail(TiStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(TiStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior NUL").into_raw()
}

/// Message describing the calling thread's last failure; empty if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ti_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Model file format version this library writes, as a static string.
#[no_mangle]
pub extern "C" fn ti_model_format_version() -> *const c_char {
    const VERSION: &CStr = c"1.0.0";
    VERSION.as_ptr()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ti_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn load_model(text: &str, out: *mut *mut TiModel) -> TiStatus {
    let file = match ModelFile::from_json(text) {
        Ok(f) => f,
        Err(e) => return fail(TiStatus::InvalidModel, e.to_string()),
    };
    match ForestClassifier::from_model_file(file) {
        Ok(clf) => {
            let handle = Box::new(TiModel { inner: Arc::new(clf) });
            unsafe { *out = Box::into_raw(handle) };
            TiStatus::Ok
        }
        Err(e) => fail(TiStatus::InvalidModel, e.to_string()),
    }
}

/// Loads a forest model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ti_model_load(path: *const c_char, out: *mut *mut TiModel) -> TiStatus {
    guard(|| {
        if out.is_null() {
            return fail(TiStatus::NullPointer, "out is NULL");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match std::fs::read_to_string(path) {
            Ok(text) => load_model(&text, out),
            Err(e) => fail(TiStatus::Io, format!("{path}: {e}")),
        }
    })
}

/// Parses a model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ti_model_from_json(json: *const c_char, out: *mut *mut TiModel) -> TiStatus {
    guard(|| {
        if out.is_null() {
            return fail(TiStatus::NullPointer, "out is NULL");
        }
        match str_arg(json, "json") {
            Ok(text) => load_model(text, out),
            Err(s) => s,
        }
    })
}

/// # Safety
/// `model` must be NULL or a live handle from `ti_model_load`/`ti_model_from_json`.
#[no_mangle]
pub unsafe extern "C" fn ti_model_free(model: *mut TiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Classifies one message. `out_probability` receives P(change_topic).
///
/// # Safety
/// `model` must be a live handle; `text` a NUL-terminated string; out
/// pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ti_model_classify(
    model: *const TiModel,
    text: *const c_char,
    out_intent: *mut TiIntent,
    out_probability: *mut f64,
) -> TiStatus {
    guard(|| {
        if model.is_null() || out_intent.is_null() || out_probability.is_null() {
            return fail(TiStatus::NullPointer, "model or an out pointer is NULL");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*model).inner.classify_text(text) {
            Ok(p) => {
                *out_intent = p.intent.into();
                *out_probability = p.confidence.unwrap_or(f64::NAN);
                TiStatus::Ok
            }
            Err(e) => fail(TiStatus::ClassifyFailed, e.to_string()),
        }
    })
}

/// Metric suite from confusion counts (change_topic is the positive class).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ti_metrics_from_confusion(tp: u64, fp: u64, fn_: u64, tn: u64, out: *mut TiMetrics) -> TiStatus {
    guard(|| {
        if out.is_null() {
            return fail(TiStatus::NullPointer, "out is NULL");
        }
        match metrics_from_confusion(&ConfusionMatrix::new(tp, fp, fn_, tn)) {
            Ok(m) => {
                let mask = METRIC_FIELDS
                    .iter()
                    .enumerate()
                    .filter(|(_, name)| m.undefined.iter().any(|u| u == *name))
                    .fold(0u32, |acc, (i, _)| acc | (1 << i));
                *out = TiMetrics {
                    macro_f1: m.macro_f1,
                    macro_precision: m.macro_precision,
                    macro_recall: m.macro_recall,
                    change_precision: m.change_precision,
                    change_recall: m.change_recall,
                    change_f1: m.change_f1,
                    continue_precision: m.continue_precision,
                    continue_recall: m.continue_recall,
                    continue_f1: m.continue_f1,
                    undefined_mask: mask,
                };
                TiStatus::Ok
            }
            Err(e) => fail(TiStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Cohen's kappa and percent agreement for `n` label pairs, each label a
/// `TiIntent` value (0 or 1).
///
/// # Safety
/// `labels_a` and `labels_b` must point to `n` readable `int32_t`s; out
/// pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ti_kappa(
    labels_a: *const i32,
    labels_b: *const i32,
    n: usize,
    out_kappa: *mut f64,
    out_agreement: *mut f64,
) -> TiStatus {
    guard(|| {
        if labels_a.is_null() || labels_b.is_null() || out_kappa.is_null() || out_agreement.is_null() {
            return fail(TiStatus::NullPointer, "an argument is NULL");
        }
        let a = std::slice::from_raw_parts(labels_a, n);
        let b = std::slice::from_raw_parts(labels_b, n);
        let mut pairs = Vec::with_capacity(n);
        for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
            let (Ok(x), Ok(y)) = (TiIntent::try_from(x), TiIntent::try_from(y)) else {
                return fail(TiStatus::InvalidArgument, format!("label at {i} is not 0 or 1"));
            };
            let to_intent = |t: TiIntent| match t {
                TiIntent::Continue => Intent::Continue,
                TiIntent::ChangeTopic => Intent::ChangeTopic,
            };
            pairs.push((to_intent(x), to_intent(y)));
        }
        match compute_agreement(&pairs) {
            Ok(r) => {
                *out_kappa = r.kappa;
                *out_agreement = r.percent_agreement;
                TiStatus::Ok
            }
            Err(e) => fail(TiStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// 1 if a model reply signals the `<exit>` sentinel, 0 if not, -1 on a NULL
/// or non-UTF-8 argument.
///
/// # Safety
/// `reply` must be NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ti_sentinel_fires(reply: *const c_char) -> i32 {
    match str_arg(reply, "reply") {
        Ok(r) => sentinel_fires(r) as i32,
        Err(_) => -1,
    }
}

struct Shared(Arc<ForestClassifier>);

impl IntentClassifier for Shared {
    fn label(&self) -> String {
        self.0.label()
    }

    fn classify(&self, context: &[ChatMessage], message: &str) -> Result<IntentPrediction, ClassifyError> {
        self.0.classify(context, message)
    }
}

/// Starts a lesson driven by `model`, with the bundled phase scripts and
/// scripted replies. The session keeps its own reference to the model.
///
/// # Safety
/// `model` must be a live handle; `conversation_id` a NUL-terminated
/// string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ti_session_new(
    model: *const TiModel,
    conversation_id: *const c_char,
    act_threshold: f64,
    confirm_threshold: f64,
    out: *mut *mut TiSession,
) -> TiStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(TiStatus::NullPointer, "model or out is NULL");
        }
        let id = match str_arg(conversation_id, "conversation_id") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let policy = match ThresholdPolicy::new(act_threshold, confirm_threshold) {
            Ok(p) => p,
            Err(e) => return fail(TiStatus::InvalidArgument, e.to_string()),
        };
        let engine = match DialogueEngine::new(default_scripts(), policy) {
            Ok(e) => e,
            Err(e) => return fail(TiStatus::InvalidArgument, e.to_string()),
        };
        let state = engine.start(id);
        *out = Box::into_raw(Box::new(TiSession {
            engine,
            classifier: (*model).inner.clone(),
            state,
        }));
        TiStatus::Ok
    })
}

/// # Safety
/// `session` must be NULL or a live handle from `ti_session_new`.
#[no_mangle]
pub unsafe extern "C" fn ti_session_free(session: *mut TiSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Current phase (1..6), or 0 once the lesson is complete; -1 for NULL.
///
/// # Safety
/// `session` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ti_session_phase(session: *const TiSession) -> i32 {
    if session.is_null() {
        return -1;
    }
    match (*session).state.phase {
        Phase::Active(p) => p as i32,
        Phase::Completed => 0,
    }
}

/// Handles one student message. `out_text` receives the reply text for
/// `TI_TURN_KIND_REPLY` (free it with `ti_string_free`) and NULL otherwise;
/// `out_phase` receives the phase after the turn (6 once complete).
///
/// # Safety
/// `session` must be a live handle; `text` a NUL-terminated string; out
/// pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ti_session_turn(
    session: *mut TiSession,
    text: *const c_char,
    out_kind: *mut TiTurnKind,
    out_text: *mut *mut c_char,
    out_phase: *mut i32,
) -> TiStatus {
    guard(|| {
        if session.is_null() || out_kind.is_null() || out_text.is_null() || out_phase.is_null() {
            return fail(TiStatus::NullPointer, "session or an out pointer is NULL");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let s = &mut *session;
        let classifier = Shared(s.classifier.clone());
        match s.engine.handle_turn(&s.state, text, &classifier, &ScriptedReplies) {
            Ok((next, outcome)) => {
                s.state = next;
                let (kind, reply) = match outcome {
                    TurnOutcome::Reply { text } => (TiTurnKind::Reply, into_c_string(text)),
                    TurnOutcome::Navigation {
                        kind: NavigationKind::ChangeTopicRequested,
                    } => (TiTurnKind::ChangeTopicRequested, ptr::null_mut()),
                    TurnOutcome::Navigation {
                        kind: NavigationKind::ConversationComplete,
                    } => (TiTurnKind::ConversationComplete, ptr::null_mut()),
                };
                *out_kind = kind;
                *out_text = reply;
                *out_phase = match s.state.phase {
                    Phase::Active(p) => p as i32,
                    Phase::Completed => PHASE_COUNT as i32,
                };
                TiStatus::Ok
            }
            Err(tutor_intent::dialogue::DialogueError::ConversationCompleted) => {
                fail(TiStatus::ConversationComplete, "conversation is already complete")
            }
            Err(e) => fail(TiStatus::ClassifyFailed, e.to_string()),
        }
    })
}

/// Session state as JSON (caller frees with `ti_string_free`).
///
/// # Safety
/// `session` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ti_session_state_json(session: *const TiSession, out: *mut *mut c_char) -> TiStatus {
    guard(|| {
        if session.is_null() || out.is_null() {
            return fail(TiStatus::NullPointer, "session or out is NULL");
        }
        match serde_json::to_string(&(*session).state) {
            Ok(s) => {
                *out = into_c_string(s);
                TiStatus::Ok
            }
            Err(e) => fail(TiStatus::InvalidArgument, e.to_string()),
        }
    })
}
