#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use bilingo::api::{router, AppState};
use bilingo::clock::ManualClock;
use bilingo_core::store::{load_pack, StateStore};
use bilingo_core::{Answer, CoursePack, Exercise};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const COURSE: &str = "guajajara-basics";
/// 2026-03-02T10:00:00Z
pub const T0: i64 = 1_772_445_600;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn golden_path() -> PathBuf {
    fixtures().join("course/golden_pack_seed42.json")
}

pub fn golden() -> CoursePack {
    load_pack(&golden_path()).unwrap()
}

pub fn bilingo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilingo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

pub fn build_args(out: &Path, seed: u64) -> Vec<String> {
    let course = fixtures().join("course");
    vec![
        "build".into(),
        "--treebank".into(),
        course.join("treebank").display().to_string(),
        "--lexicon".into(),
        course.join("lexicon.tsv").display().to_string(),
        "--config".into(),
        course.join("course.toml").display().to_string(),
        "--seed".into(),
        seed.to_string(),
        "--out".into(),
        out.display().to_string(),
    ]
}

pub struct TestApp {
    pub router: Router,
    pub clock: Arc<ManualClock>,
    pub pack: CoursePack,
    pub state_dir: tempfile::TempDir,
}

impl TestApp {
    pub fn new() -> Self {
        let state_dir = tempfile::tempdir().unwrap();
        Self::with_dir(state_dir)
    }

    pub fn with_dir(state_dir: tempfile::TempDir) -> Self {
        let pack = golden();
        let clock = Arc::new(ManualClock::new(T0));
        let store = StateStore::open(state_dir.path()).unwrap();
        let app = AppState::new(vec![pack.clone()], store, clock.clone());
        TestApp {
            router: router(app, None),
            clock,
            pack,
            state_dir,
        }
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        call(&self.router, method, uri, body).await
    }

    pub async fn lesson(&self, student: &str, s: usize, l: usize) -> (StatusCode, Value) {
        self.call(
            "GET",
            &format!("/api/courses/{COURSE}/sections/{s}/lessons/{l}?student={student}"),
            None,
        )
        .await
    }

    pub async fn answer(
        &self,
        student: &str,
        ex: &Exercise,
        correct: bool,
        nonce: Option<&str>,
    ) -> (StatusCode, Value) {
        let mut body = json!({
            "student": student,
            "exercise_id": ex.id,
            "payload": payload(ex, correct),
        });
        if let Some(n) = nonce {
            body["nonce"] = json!(n);
        }
        self.call("POST", &format!("/api/courses/{COURSE}/answers"), Some(body))
            .await
    }

    pub async fn progress(&self, student: &str) -> (StatusCode, Value) {
        self.call(
            "GET",
            &format!("/api/students/{student}/progress?course={COURSE}"),
            None,
        )
        .await
    }

    pub fn exercise(&self, s: usize, l: usize, i: usize) -> &Exercise {
        &self.pack.lesson(s, l).unwrap().exercises[i]
    }
}

pub fn payload(ex: &Exercise, correct: bool) -> Value {
    match &ex.answer {
        Answer::Tokens(t) if correct => json!({ "tokens": t }),
        Answer::Tokens(t) => {
            let mut wrong = t.clone();
            wrong.reverse();
            if wrong == *t {
                wrong.push("x".into());
            }
            json!({ "tokens": wrong })
        }
        Answer::Concept(c) if correct => json!({ "concept": c }),
        Answer::Concept(c) => {
            let other = ex.bank.iter().find(|o| *o != c).unwrap();
            json!({ "concept": other })
        }
    }
}

pub async fn call(router: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

/// Play the whole course with correct answers, scanning every lesson payload
/// fetched along the way. Returns (payloads scanned, leaks found).
pub async fn play_through_scanning(app: &TestApp, student: &str) -> (usize, Vec<String>) {
    let mut scanned = 0;
    let mut leaks = Vec::new();
    let shape = app.pack.shape();
    for (s, &lessons) in shape.iter().enumerate() {
        for l in 0..lessons {
            let n = app.pack.lesson(s, l).unwrap().exercises.len();
            for i in 0..n {
                let (status, payload) = app.lesson(student, s, l).await;
                assert_eq!(status, StatusCode::OK, "{payload}");
                scanned += 1;
                leaks.extend(bilingo::api::answer_leaks(&payload, &app.pack));
                let ex = app.exercise(s, l, i).clone();
                let (status, body) = app.answer(student, &ex, true, None).await;
                assert_eq!(status, StatusCode::OK, "{body}");
                app.clock.advance(5);
            }
        }
    }
    // every lesson is open once the course is done
    for (s, &lessons) in shape.iter().enumerate() {
        for l in 0..lessons {
            let (status, payload) = app.lesson(student, s, l).await;
            assert_eq!(status, StatusCode::OK);
            scanned += 1;
            leaks.extend(bilingo::api::answer_leaks(&payload, &app.pack));
        }
    }
    (scanned, leaks)
}
