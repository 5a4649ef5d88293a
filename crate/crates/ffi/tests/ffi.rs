use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tutor_intent::corpus::generate_synthetic_corpus;
use tutor_intent::forest::{fit_pipeline, ForestParams, FORMAT_VERSION};
use tutor_intent::textfeat::TfIdfConfig;
use tutor_intent_ffi::*;

fn model_json() -> String {
    let ds = generate_synthetic_corpus(300, 0.2, 3).unwrap();
    let params = ForestParams {
        n_trees: 30,
        seed: 5,
        ..ForestParams::default()
    };
    let clf = fit_pipeline(&ds, TfIdfConfig::default(), params, 0.5).unwrap();
    clf.to_model_file().to_json()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ti_last_error_message()) }.to_string_lossy().into_owned()
}

fn load(json: &str) -> *mut TiModel {
    let c = CString::new(json).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ti_model_from_json(c.as_ptr(), &mut model) }, TiStatus::Ok, "{}", last_error());
    assert!(!model.is_null());
    model
}

#[test]
fn classify_through_handle() {
    let model = load(&model_json());
    let mut intent = TiIntent::Continue;
    let mut p = -1.0;
    let text = CString::new("I want to stop this lesson").unwrap();
    assert_eq!(unsafe { ti_model_classify(model, text.as_ptr(), &mut intent, &mut p) }, TiStatus::Ok);
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(intent == TiIntent::ChangeTopic, p >= 0.5);
    unsafe { ti_model_free(model) };
}

#[test]
fn load_from_file_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, model_json()).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ti_model_load(cpath.as_ptr(), &mut model) }, TiStatus::Ok);
    unsafe { ti_model_free(model) };

    let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ti_model_load(missing.as_ptr(), &mut model) }, TiStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("nope.json"));

    let bad = CString::new(r#"{"format": "2.0.0"}"#).unwrap();
    assert_eq!(unsafe { ti_model_from_json(bad.as_ptr(), &mut model) }, TiStatus::InvalidModel);
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { ti_model_load(ptr::null(), &mut model) }, TiStatus::NullPointer);
    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { ti_model_load(invalid.as_ptr() as *const c_char, &mut model) },
        TiStatus::InvalidUtf8
    );
    unsafe {
        ti_model_free(ptr::null_mut());
        ti_session_free(ptr::null_mut());
        ti_string_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ti_model_format_version()) };
    assert_eq!(v.to_str().unwrap(), FORMAT_VERSION);
}

#[test]
fn metrics_hand_case() {
    let mut m = TiMetrics::default();
    assert_eq!(unsafe { ti_metrics_from_confusion(5, 4, 7, 146, &mut m) }, TiStatus::Ok);
    assert!((m.change_precision - 5.0 / 9.0).abs() < 1e-12);
    assert!((m.change_recall - 5.0 / 12.0).abs() < 1e-12);
    assert_eq!(m.undefined_mask, 0);

    assert_eq!(unsafe { ti_metrics_from_confusion(0, 0, 3, 10, &mut m) }, TiStatus::Ok);
    assert_eq!(m.change_precision, 0.0);
    assert_ne!(m.undefined_mask & (1 << 3), 0);

    assert_eq!(unsafe { ti_metrics_from_confusion(0, 0, 0, 0, &mut m) }, TiStatus::InvalidArgument);
}

#[test]
fn kappa_hand_case() {
    let a = [1, 1, 0, 0];
    let b = [1, 0, 0, 0];
    let (mut k, mut po) = (0.0, 0.0);
    assert_eq!(unsafe { ti_kappa(a.as_ptr(), b.as_ptr(), 4, &mut k, &mut po) }, TiStatus::Ok);
    assert!((k - 0.5).abs() < 1e-12);
    assert!((po - 0.75).abs() < 1e-12);
    let bad = [1, 2, 0, 0];
    assert_eq!(unsafe { ti_kappa(a.as_ptr(), bad.as_ptr(), 4, &mut k, &mut po) }, TiStatus::InvalidArgument);
}

#[test]
fn sentinel_detection() {
    for (s, want) in [("<EXIT>", 1), (" ok <exit> ", 1), ("exit", 0), ("< exit >", 0)] {
        let c = CString::new(s).unwrap();
        assert_eq!(unsafe { ti_sentinel_fires(c.as_ptr()) }, want, "{s}");
    }
    assert_eq!(unsafe { ti_sentinel_fires(ptr::null()) }, -1);
}

#[test]
fn session_runs_to_completion_or_navigation() {
    let model = load(&model_json());
    let id = CString::new("ffi-1").unwrap();
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { ti_session_new(model, id.as_ptr(), 0.75, 0.5, &mut session) }, TiStatus::Ok);
    // The session holds its own reference.
    unsafe { ti_model_free(model) };
    assert_eq!(unsafe { ti_session_phase(session) }, 1);

    let yes = CString::new("yes").unwrap();
    let mut last = TiTurnKind::Reply;
    let mut turns = 0;
    while last == TiTurnKind::Reply && turns < 12 {
        let before = unsafe { ti_session_phase(session) };
        let (mut kind, mut text, mut phase) = (TiTurnKind::Reply, ptr::null_mut(), 0);
        assert_eq!(
            unsafe { ti_session_turn(session, yes.as_ptr(), &mut kind, &mut text, &mut phase) },
            TiStatus::Ok
        );
        match kind {
            TiTurnKind::Reply => {
                assert!(!text.is_null());
                assert!(phase >= before);
                unsafe { ti_string_free(text) };
            }
            TiTurnKind::ChangeTopicRequested => {
                assert!(text.is_null());
                assert_eq!(phase, before);
            }
            TiTurnKind::ConversationComplete => assert_eq!(phase, 6),
        }
        last = kind;
        turns += 1;
    }
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ti_session_state_json(session, &mut json) }, TiStatus::Ok);
    let state = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    unsafe { ti_string_free(json) };
    assert!(state.contains("\"conversation_id\":\"ffi-1\""));

    if last == TiTurnKind::ConversationComplete {
        let (mut kind, mut text, mut phase) = (TiTurnKind::Reply, ptr::null_mut(), 0);
        let st = unsafe { ti_session_turn(session, yes.as_ptr(), &mut kind, &mut text, &mut phase) };
        assert_eq!(st, TiStatus::ConversationComplete);
        assert_eq!(unsafe { ti_session_phase(session) }, 0);
    }
    unsafe { ti_session_free(session) };
}

#[test]
fn session_rejects_bad_policy() {
    let model = load(&model_json());
    let id = CString::new("x").unwrap();
    let mut session = ptr::null_mut();
    assert_eq!(
        unsafe { ti_session_new(model, id.as_ptr(), 0.4, 0.6, &mut session) },
        TiStatus::InvalidArgument
    );
    assert!(session.is_null());
    unsafe { ti_model_free(model) };
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tutor_intent.h")
}

#[test]
fn header_declares_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "typedef struct TiModel TiModel;",
        "typedef struct TiSession TiSession;",
        "TI_STATUS_OK = 0",
        "ti_model_load",
        "ti_model_classify",
        "ti_metrics_from_confusion",
        "ti_kappa",
        "ti_sentinel_fires",
        "ti_session_turn",
        "ti_last_error_message",
        "ti_string_free",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "tutor_intent.h"

int main(void) {
    TiMetrics m;
    if (ti_metrics_from_confusion(5, 4, 7, 146, &m) != TI_STATUS_OK) return 1;
    if (m.change_precision < 0.5555 || m.change_precision > 0.5556) return 2;
    if (ti_sentinel_fires("  <EXIT> ") != 1) return 3;
    TiModel *model = NULL;
    if (ti_model_load("/nonexistent/model.json", &model) != TI_STATUS_IO) return 4;
    if (strlen(ti_last_error_message()) == 0) return 5;
    printf("ok %s\n", ti_model_format_version());
    return 0;
}
"#;

/// Compiles a C program against the header and the static library.
#[test]
fn c_program_links_against_staticlib() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libtutor_intent_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("ok {FORMAT_VERSION}"));
}
