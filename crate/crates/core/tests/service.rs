mod common;

use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use common::{Canned, MockChatServer};
use serde_json::{json, Value};
use tutor_intent::classifier::{ChatMessage, ClassifyError, IntentClassifier, IntentPrediction, ScriptedReplies};
use tutor_intent::config::{BackendKind, BackendSpec, Built};
use tutor_intent::dialogue::{DialogueEngine, Phase};
use tutor_intent::llm::{BackendConfig, ScriptEntry, ScriptedClassifier};
use tutor_intent::service::{serve_with_shutdown, AppState};
use tutor_intent::Intent;

struct Running {
    addr: SocketAddr,
    state: Arc<AppState>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<thread::JoinHandle<std::io::Result<()>>>,
}

impl Running {
    fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        self.handle.take().map_or(Ok(()), |h| h.join().unwrap())
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

fn start(state: AppState) -> Running {
    let state = Arc::new(state);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let s = state.clone();
    let handle = thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            serve_with_shutdown(listener, s, async move {
                let _ = rx.await;
            })
            .await
        })
    });
    Running {
        addr,
        state,
        stop: Some(tx),
        handle: Some(handle),
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .into()
}

fn post_raw(url: &str, content_type: &str, body: &str) -> (u16, String) {
    let mut resp = agent()
        .post(url)
        .header("Content-Type", content_type)
        .send(body)
        .unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

fn post(url: &str, body: Value) -> (u16, Value) {
    let (status, text) = post_raw(url, "application/json", &body.to_string());
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

fn get(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    let text = resp.body_mut().read_to_string().unwrap();
    (resp.status().as_u16(), serde_json::from_str(&text).unwrap_or(Value::Null))
}

fn mock_state(script: Vec<ScriptEntry>) -> AppState {
    let clf = ScriptedClassifier::new("Mock", script).unwrap().repeating();
    AppState::new(
        Built {
            classifier: Arc::new(clf),
            replies: Arc::new(ScriptedReplies),
            model_format: None,
        },
        DialogueEngine::default(),
    )
}

fn turn(server: &Running, conv: &str, text: &str) -> (u16, Value) {
    post(&server.url("/turn"), json!({"conversation_id": conv, "text": text}))
}

#[test]
fn six_continue_turns_complete_the_lesson() {
    let server = start(mock_state(vec![ScriptEntry::intent(Intent::Continue)]));
    for i in 1..=6u64 {
        let (status, body) = turn(&server, "c1", "yes");
        assert_eq!(status, 200, "{body}");
        if i < 6 {
            assert_eq!(body["type"], "reply");
            assert!(body["text"].is_string());
            assert!(body["navigation_kind"].is_null());
            assert_eq!(body["phase_index"], i + 1);
        } else {
            assert_eq!(body["type"], "navigation");
            assert!(body["text"].is_null());
            assert_eq!(body["navigation_kind"], "conversation_complete");
            assert_eq!(body["phase_index"], 6);
        }
    }
    let (status, body) = turn(&server, "c1", "hello again");
    assert_eq!(status, 422, "{body}");
}

#[test]
fn phase_index_matches_session_store() {
    let server = start(mock_state(vec![
        ScriptEntry::intent(Intent::Continue),
        ScriptEntry::scored(Intent::ChangeTopic, 0.6),
        ScriptEntry::intent(Intent::Continue),
    ]));
    let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
    for text in ["yes", "hmm", "what?", "no", "ok"] {
        let (status, body) = turn(&server, "c2", text);
        assert_eq!(status, 200);
        let stored = rt.block_on(server.state.conversation("c2")).unwrap();
        assert_eq!(body["phase_index"], stored.phase_index().unwrap() as u64, "{body}");
    }
}

#[test]
fn malformed_requests_are_400() {
    let server = start(mock_state(vec![ScriptEntry::intent(Intent::Continue)]));
    let url = server.url("/classify");
    assert_eq!(post(&url, json!({"conversation_id": "c", "text": ""})).0, 400);
    assert_eq!(post(&url, json!({"text": "   "})).0, 400);
    assert_eq!(post(&url, json!({"conversation_id": "c"})).0, 400);
    assert_eq!(post_raw(&url, "application/json", "{not json").0, 400);
    assert_eq!(post_raw(&url, "text/plain", r#"{"text": "hi"}"#).0, 400);
    let turn_url = server.url("/turn");
    assert_eq!(post(&turn_url, json!({"conversation_id": "", "text": "hi"})).0, 400);
    assert_eq!(post(&turn_url, json!({"conversation_id": "c", "text": ""})).0, 400);
    let (status, body) = post(&turn_url, json!({"text": "hi"}));
    assert_eq!(status, 400);
    assert!(body["error"].is_string());
}

#[test]
fn classify_ok_and_backend_failure() {
    let server = start(mock_state(vec![
        ScriptEntry::scored(Intent::ChangeTopic, 0.8),
        ScriptEntry::ToolCall {
            tool_call: "delete_account".into(),
        },
        ScriptEntry::ToolCall {
            tool_call: "delete_account".into(),
        },
    ]));
    let (status, body) = post(&server.url("/classify"), json!({"conversation_id": "c", "text": "bye"}));
    assert_eq!(status, 200);
    assert_eq!(body["intent"], "change_topic");
    assert_eq!(body["confidence"], 0.8);
    assert!(body["latency_seconds"].as_f64().unwrap() > 0.0);
    let (status, _) = post(&server.url("/classify"), json!({"text": "bye"}));
    assert_eq!(status, 502);
    // /turn fails open instead.
    let (status, body) = turn(&server, "c9", "hello");
    assert_eq!(status, 200);
    assert_eq!(body["type"], "reply");
}

#[test]
fn health_reports_backend_without_calling_it() {
    let remote = MockChatServer::start(vec![], Canned::status(500));
    let mut spec = BackendSpec::of_kind(BackendKind::Sentinel);
    spec.llm = Some(BackendConfig::new(remote.url.clone(), "gpt-3.5-turbo"));
    let built = spec.build_classifier().unwrap();
    let server = start(AppState::new(built, DialogueEngine::default()));
    let (status, body) = get(&server.url("/health"));
    assert_eq!(status, 200);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["backend"], "gpt-3.5-turbo");
    assert!(body["model_format_version"].is_null());
    assert_eq!(remote.n_requests(), 0);
}

/// Blocks on messages starting with "block" until the test releases it.
struct Gate {
    entered: Mutex<mpsc::Sender<String>>,
    release: Mutex<mpsc::Receiver<()>>,
}

impl IntentClassifier for Gate {
    fn label(&self) -> String {
        "Gate".into()
    }

    fn classify(&self, _context: &[ChatMessage], message: &str) -> Result<IntentPrediction, ClassifyError> {
        self.entered.lock().unwrap().send(message.to_string()).unwrap();
        if message.starts_with("block") {
            self.release.lock().unwrap().recv().unwrap();
        }
        Ok(IntentPrediction {
            intent: Intent::Continue,
            confidence: None,
            latency_seconds: 1e-6,
            raw: String::new(),
        })
    }

    fn warm_up(&self) {}
}

fn gate_state() -> (AppState, mpsc::Receiver<String>, mpsc::Sender<()>) {
    let (entered_tx, entered_rx) = mpsc::channel();
    let (release_tx, release_rx) = mpsc::channel();
    let gate = Gate {
        entered: Mutex::new(entered_tx),
        release: Mutex::new(release_rx),
    };
    let state = AppState::new(
        Built {
            classifier: Arc::new(gate),
            replies: Arc::new(ScriptedReplies),
            model_format: None,
        },
        DialogueEngine::default(),
    );
    (state, entered_rx, release_tx)
}

#[test]
fn turns_serialize_per_conversation_and_run_in_parallel_across() {
    let (state, entered, release) = gate_state();
    let server = Arc::new(start(state));

    let s = server.clone();
    let first = thread::spawn(move || turn(&s, "A", "block first"));
    assert_eq!(entered.recv_timeout(Duration::from_secs(5)).unwrap(), "block first");

    // Another conversation proceeds while A is blocked.
    let (status, body) = turn(&server, "B", "hello");
    assert_eq!((status, body["phase_index"].as_u64()), (200, Some(2)));
    assert_eq!(entered.recv_timeout(Duration::from_secs(1)).unwrap(), "hello");

    // A second turn on A waits for the first.
    let (done_tx, done_rx) = mpsc::channel();
    let s = server.clone();
    let second = thread::spawn(move || {
        let r = turn(&s, "A", "second");
        done_tx.send(()).unwrap();
        r
    });
    assert!(done_rx.recv_timeout(Duration::from_millis(300)).is_err());
    assert!(entered.try_recv().is_err(), "second turn reached the classifier early");

    release.send(()).unwrap();
    let (s1, b1) = first.join().unwrap();
    let (s2, b2) = second.join().unwrap();
    assert_eq!((s1, s2), (200, 200));
    assert_eq!(b1["phase_index"], 2);
    assert_eq!(b2["phase_index"], 3, "second turn must observe the first's state");
    assert_eq!(entered.recv_timeout(Duration::from_secs(1)).unwrap(), "second");
}

#[test]
fn shutdown_drains_in_flight_turns_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("sessions.json");
    let (state, entered, release) = gate_state();
    let state = state.with_snapshot(&snap).unwrap();
    let mut server = start(state);
    let addr = server.addr;

    let t = thread::spawn(move || {
        post(
            &format!("http://{addr}/turn"),
            json!({"conversation_id": "in-flight", "text": "block me"}),
        )
    });
    entered.recv_timeout(Duration::from_secs(5)).unwrap();
    let stop = server.stop.take().unwrap();
    stop.send(()).unwrap();
    thread::sleep(Duration::from_millis(100));
    release.send(()).unwrap();
    let (status, body) = t.join().unwrap();
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["phase_index"], 2);
    server.shutdown().unwrap();

    let saved: Vec<tutor_intent::dialogue::DialogueState> =
        serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    assert_eq!(saved.len(), 1);
    assert_eq!(saved[0].conversation_id, "in-flight");
    assert_eq!(saved[0].phase, Phase::Active(2));

    // A new process restores the session.
    let restored = mock_state(vec![ScriptEntry::intent(Intent::Continue)]).with_snapshot(&snap).unwrap();
    let server = start(restored);
    let (status, body) = turn(&server, "in-flight", "yes");
    assert_eq!((status, body["phase_index"].as_u64()), (200, Some(3)));
}

#[test]
fn requests_during_shutdown_get_503() {
    let server = start(mock_state(vec![ScriptEntry::intent(Intent::Continue)]));
    assert_eq!(get(&server.url("/health")).0, 200);
    server.state.begin_shutdown();
    assert_eq!(get(&server.url("/health")).0, 503);
    assert_eq!(turn(&server, "c", "yes").0, 503);
}

struct Capture(Mutex<Vec<String>>);

impl log::Log for Capture {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }

    fn log(&self, record: &log::Record) {
        self.0.lock().unwrap().push(format!("{} {} {}", record.level(), record.target(), record.args()));
    }

    fn flush(&self) {}
}

fn capture() -> &'static Capture {
    static LOGGER: OnceLock<&'static Capture> = OnceLock::new();
    LOGGER.get_or_init(|| {
        let c: &'static Capture = Box::leak(Box::new(Capture(Mutex::new(Vec::new()))));
        log::set_logger(c).unwrap();
        log::set_max_level(log::LevelFilter::Trace);
        c
    })
}

#[test]
fn secrets_never_reach_logs_or_responses() {
    const SECRET: &str = "sk-live-DO-NOT-LEAK-4242";
    let logs = capture();
    std::env::set_var("TUTOR_INTENT_SERVICE_TEST_KEY", SECRET);
    let remote = MockChatServer::start(
        vec![Canned::status(500), Canned::status(401)],
        Canned::ok(common::text_reply("Maths is old.")),
    );
    let mut llm = BackendConfig::new(remote.url.clone(), "gpt-4o");
    llm.api_key_env = Some("TUTOR_INTENT_SERVICE_TEST_KEY".into());
    llm.max_retries = 1;
    llm.retry_base_seconds = 0.01;
    let mut spec = BackendSpec::of_kind(BackendKind::FunctionCall);
    spec.llm = Some(llm);
    let server = start(AppState::new(spec.build_classifier().unwrap(), DialogueEngine::default()));

    let mut bodies = Vec::new();
    bodies.push(post(&server.url("/classify"), json!({"text": "bye"})).1);
    bodies.push(turn(&server, "s", "yes").1);
    bodies.push(turn(&server, "s", "yes").1);
    bodies.push(get(&server.url("/health")).1);
    assert!(remote.n_requests() >= 3);
    assert!(remote
        .requests
        .lock()
        .unwrap()
        .iter()
        .all(|r| r.header("authorization") == Some(&format!("Bearer {SECRET}"))));

    let captured = logs.0.lock().unwrap();
    assert!(!captured.is_empty(), "expected some log output");
    for line in captured.iter() {
        assert!(!line.contains(SECRET), "secret leaked into log: {line}");
    }
    for b in bodies {
        assert!(!b.to_string().contains(SECRET), "secret leaked into response: {b}");
    }
}
