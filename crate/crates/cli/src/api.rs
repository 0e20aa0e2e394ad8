//! HTTP service: course listing, answer-free lesson payloads, grading and
//! progress. All learner mutations go through one store lock, so requests for
//! a student are applied in some sequential order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use bilingo_core::engine::{submit, utc_date, AnswerEvent, EngineError, GradeResult, Rules, StudentState, Submission};
use bilingo_core::store::{load_pack, StateStore, Transition};
use bilingo_core::{Answer, CoursePack, Exercise, ExerciseKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::services::ServeDir;

use crate::clock::{Clock, SystemClock};
use crate::commands::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retry_after_s: Option<i64>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            retry_after_s: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    fn locked_out(remaining: i64) -> Self {
        ApiError {
            retry_after_s: Some(remaining),
            ..Self::new(
                StatusCode::LOCKED,
                "LOCKED_OUT",
                format!("out of gems, try again in {remaining} s"),
            )
        }
    }

    fn storage(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "STORAGE_FAILURE", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::ShapeMismatch(_) => Self::new(StatusCode::BAD_REQUEST, "SHAPE_MISMATCH", msg),
            EngineError::UnknownExercise(_) | EngineError::WrongCourse { .. } => Self::not_found(msg),
            EngineError::NotCurrent { .. } => Self::new(StatusCode::CONFLICT, "EXERCISE_NOT_CURRENT", msg),
            EngineError::CourseComplete => Self::new(StatusCode::CONFLICT, "COURSE_COMPLETE", msg),
            EngineError::LessonIncomplete | EngineError::BadTimestamp(_) | EngineError::Invariant(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", msg)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let retry = self.retry_after_s;
        let mut resp = (status, Json(self)).into_response();
        if let Some(secs) = retry {
            if let Ok(v) = HeaderValue::from_str(&secs.to_string()) {
                resp.headers_mut().insert(header::RETRY_AFTER, v);
            }
        }
        resp
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub packs: Arc<BTreeMap<String, CoursePack>>,
    pub store: Arc<Mutex<StateStore>>,
    pub clock: Arc<dyn Clock>,
    /// Concept id → image URL.
    pub assets: Arc<BTreeMap<String, String>>,
    pub rules: Rules,
}

impl AppState {
    pub fn new(packs: Vec<CoursePack>, store: StateStore, clock: Arc<dyn Clock>) -> Self {
        AppState {
            packs: Arc::new(packs.into_iter().map(|p| (p.course_id.clone(), p)).collect()),
            store: Arc::new(Mutex::new(store)),
            clock,
            assets: Arc::new(BTreeMap::new()),
            rules: Rules::default(),
        }
    }

    pub fn with_assets(mut self, assets: BTreeMap<String, String>) -> Self {
        self.assets = Arc::new(assets);
        self
    }

    fn pack(&self, course_id: &str) -> Result<&CoursePack, ApiError> {
        self.packs
            .get(course_id)
            .ok_or_else(|| ApiError::not_found(format!("no course `{course_id}`")))
    }

    /// Stored state or a fresh, unsaved one.
    fn state_or_fresh(&self, student: &str, course_id: &str) -> Result<StudentState, ApiError> {
        let store = self
            .store
            .lock()
            .map_err(|_| ApiError::storage("state store lock poisoned"))?;
        Ok(store
            .get(student, course_id)
            .cloned()
            .unwrap_or_else(|| StudentState::new(student, course_id, self.rules)))
    }
}

// ---- response shapes ----

#[derive(Debug, Serialize)]
pub struct SectionSummary {
    pub subject: String,
    pub lessons: usize,
}

#[derive(Debug, Serialize)]
pub struct CourseSummary {
    pub id: String,
    pub language: String,
    pub sections: Vec<SectionSummary>,
}

#[derive(Debug, Serialize)]
pub struct OptionView {
    pub concept_id: String,
    pub gloss: String,
    /// Image URL from the asset manifest; absent means show the gloss card.
    pub asset: Option<String>,
}

/// An exercise as learners see it: no answer, no linked concepts.
#[derive(Debug, Serialize)]
#[serde(tag = "kind")]
pub enum ExerciseView {
    TS1 {
        id: String,
        prompt: String,
        bank: Vec<String>,
    },
    TS2 {
        id: String,
        prompt: String,
        bank: Vec<String>,
    },
    CM {
        id: String,
        prompt: String,
        options: Vec<OptionView>,
    },
}

#[derive(Debug, Serialize)]
pub struct LessonView {
    pub course_id: String,
    pub section: usize,
    pub subject: String,
    pub lesson: usize,
    /// Index of the exercise to answer next, when this is the current lesson.
    pub position: Option<usize>,
    pub exercises: Vec<ExerciseView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CursorView {
    pub section: usize,
    pub lesson: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemsView {
    pub current: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreakView {
    pub days: u32,
    pub last_active_date: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestView {
    pub lessons_completed_today: u32,
    pub target: u32,
    pub done: bool,
}

/// What a client may know about a learner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicState {
    pub student_id: String,
    pub course_id: String,
    pub cursor: CursorView,
    pub exercise_index: usize,
    pub gems: GemsView,
    pub locked_out: bool,
    pub retry_after_s: i64,
    pub streak: StreakView,
    pub quest: QuestView,
    pub course_complete: bool,
}

impl PublicState {
    /// Projection as seen at `now`: stale streaks and quests read as zero,
    /// an expired lockout reads as full gems.
    pub fn project(s: &StudentState, now: i64) -> Self {
        let today = utc_date(now).ok();
        let streak_days = match (s.streak.last_active_date, today) {
            (Some(last), Some(today)) if (today - last).num_days() <= 1 => s.streak.days,
            _ => 0,
        };
        let quest_today = match (s.quest.date, today) {
            (Some(d), Some(today)) if d == today => s.quest.lessons_completed_today,
            _ => 0,
        };
        let remaining = s.lockout_remaining(now);
        let gems = if s.lockout_until.is_some() && remaining == 0 && s.rules.refill_on_expiry {
            s.gems.max
        } else {
            s.gems.current
        };
        PublicState {
            student_id: s.student_id.clone(),
            course_id: s.course_id.clone(),
            cursor: CursorView {
                section: s.cursor.section,
                lesson: s.cursor.lesson,
            },
            exercise_index: s.lesson_run.map_or(0, |r| r.exercise_index),
            gems: GemsView {
                current: gems,
                max: s.gems.max,
            },
            locked_out: remaining > 0,
            retry_after_s: remaining,
            streak: StreakView {
                days: streak_days,
                last_active_date: s.streak.last_active_date.map(|d| d.to_string()),
            },
            quest: QuestView {
                lessons_completed_today: quest_today,
                target: s.rules.quest_target,
                done: quest_today >= s.rules.quest_target,
            },
            course_complete: s.course_complete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub result: GradeResult,
    pub state: PublicState,
}

#[derive(Debug, Deserialize)]
struct AnswerRequest {
    student: String,
    exercise_id: String,
    payload: Value,
    #[serde(default)]
    nonce: Option<String>,
}

#[derive(Debug, Deserialize)]
struct StudentQuery {
    student: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CourseQuery {
    course: Option<String>,
}

// ---- handlers ----

async fn list_courses(State(app): State<AppState>) -> Json<Vec<CourseSummary>> {
    Json(course_summaries(&app.packs))
}

pub fn course_summaries(packs: &BTreeMap<String, CoursePack>) -> Vec<CourseSummary> {
    packs
        .values()
        .map(|p| CourseSummary {
            id: p.course_id.clone(),
            language: p.language.clone(),
            sections: p
                .sections
                .iter()
                .map(|s| SectionSummary {
                    subject: s.spec.subject.clone(),
                    lessons: s.lessons.len(),
                })
                .collect(),
        })
        .collect()
}

fn exercise_view(pack: &CoursePack, assets: &BTreeMap<String, String>, ex: &Exercise) -> ExerciseView {
    let (id, prompt) = (ex.id.clone(), ex.prompt.clone());
    match ex.kind {
        ExerciseKind::TS1 => ExerciseView::TS1 {
            id,
            prompt,
            bank: ex.bank.clone(),
        },
        ExerciseKind::TS2 => ExerciseView::TS2 {
            id,
            prompt,
            bank: ex.bank.clone(),
        },
        ExerciseKind::CM => ExerciseView::CM {
            id,
            prompt,
            options: ex
                .bank
                .iter()
                .map(|c| OptionView {
                    concept_id: c.clone(),
                    gloss: pack.glossary.get(c).cloned().unwrap_or_else(|| c.clone()),
                    asset: assets.get(c).cloned(),
                })
                .collect(),
        },
    }
}

fn parse_index(raw: &str, what: &str) -> Result<usize, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::not_found(format!("{what} `{raw}` is not a valid index")))
}

async fn get_lesson(
    State(app): State<AppState>,
    UrlPath((course_id, section, lesson)): UrlPath<(String, String, String)>,
    Query(q): Query<StudentQuery>,
) -> ApiResult<LessonView> {
    let pack = app.pack(&course_id)?;
    let s_idx = parse_index(&section, "section")?;
    let l_idx = parse_index(&lesson, "lesson")?;
    let sec = pack
        .sections
        .get(s_idx)
        .ok_or_else(|| ApiError::not_found(format!("no section {s_idx}")))?;
    let les = sec
        .lessons
        .get(l_idx)
        .ok_or_else(|| ApiError::not_found(format!("no lesson {l_idx} in section {s_idx}")))?;
    let student = q
        .student
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::bad_request("missing `student` query parameter"))?;

    let state = app.state_or_fresh(&student, &course_id)?;
    let now = app.clock.now();
    let remaining = state.lockout_remaining(now);
    if remaining > 0 {
        return Err(ApiError::locked_out(remaining));
    }
    let here = (s_idx, l_idx);
    let cursor = (state.cursor.section, state.cursor.lesson);
    if !state.course_complete && here > cursor {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "LESSON_LOCKED",
            format!(
                "lesson {s_idx}/{l_idx} is ahead of the current lesson {}/{}",
                cursor.0, cursor.1
            ),
        ));
    }
    let position = (!state.course_complete && here == cursor).then(|| state.lesson_run.map_or(0, |r| r.exercise_index));
    Ok(Json(LessonView {
        course_id: pack.course_id.clone(),
        section: s_idx,
        subject: sec.spec.subject.clone(),
        lesson: l_idx,
        position,
        exercises: les
            .exercises
            .iter()
            .map(|e| exercise_view(pack, &app.assets, e))
            .collect(),
    }))
}

fn answer_blocking(app: &AppState, course_id: &str, req: AnswerRequest) -> Result<AnswerResponse, ApiError> {
    let pack = app.pack(course_id)?;
    if req.student.is_empty() {
        return Err(ApiError::bad_request("empty student id"));
    }
    let exercise = pack
        .find_exercise(&req.exercise_id)
        .ok_or_else(|| ApiError::not_found(format!("no exercise `{}` in course `{course_id}`", req.exercise_id)))?;
    let submission: Submission = serde_json::from_value(req.payload).map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "SHAPE_MISMATCH",
            format!("payload is not a valid {} submission", exercise.kind),
        )
    })?;

    let mut store = app
        .store
        .lock()
        .map_err(|_| ApiError::storage("state store lock poisoned"))?;
    if let Some(nonce) = &req.nonce {
        if let Some(rec) = store.find_by_nonce(course_id, &req.student, &req.exercise_id, nonce) {
            return Ok(AnswerResponse {
                result: rec.result.clone(),
                state: PublicState::project(&rec.state_after, rec.event.now),
            });
        }
    }
    let now = app.clock.now();
    let state = store
        .get(&req.student, course_id)
        .cloned()
        .unwrap_or_else(|| StudentState::new(req.student.as_str(), course_id, app.rules));
    let outcome = submit(&state, pack, &req.exercise_id, &submission, now)?;
    if !outcome.changed {
        return Err(ApiError::locked_out(outcome.result.lockout_remaining_s));
    }
    let transition = Transition {
        nonce: req.nonce,
        event: AnswerEvent {
            exercise_id: req.exercise_id,
            submission,
            now,
        },
        result: outcome.result.clone(),
    };
    store
        .commit(&outcome.state, transition)
        .map_err(|e| ApiError::storage(e.to_string()))?;
    Ok(AnswerResponse {
        result: outcome.result,
        state: PublicState::project(&outcome.state, now),
    })
}

async fn post_answer(
    State(app): State<AppState>,
    UrlPath(course_id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<AnswerResponse> {
    let req: AnswerRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
    // journal writes fsync, keep them off the async workers
    tokio::task::spawn_blocking(move || answer_blocking(&app, &course_id, req))
        .await
        .map_err(|e| ApiError::storage(e.to_string()))?
        .map(Json)
}

async fn get_progress(
    State(app): State<AppState>,
    UrlPath(student): UrlPath<String>,
    Query(q): Query<CourseQuery>,
) -> ApiResult<PublicState> {
    let course_id = q
        .course
        .ok_or_else(|| ApiError::bad_request("missing `course` query parameter"))?;
    app.pack(&course_id)?;
    let state = app.state_or_fresh(&student, &course_id)?;
    Ok(Json(PublicState::project(&state, app.clock.now())))
}

async fn asset_manifest(State(app): State<AppState>) -> Json<BTreeMap<String, String>> {
    Json((*app.assets).clone())
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(app: AppState, ui: Option<&Path>) -> Router {
    let routes = Router::new()
        .route("/api/courses", get(list_courses))
        .route("/api/courses/{cid}/sections/{s}/lessons/{n}", get(get_lesson))
        .route("/api/courses/{cid}/answers", post(post_answer))
        .route("/api/students/{sid}/progress", get(get_progress))
        .route("/api/{*rest}", any(api_not_found))
        .route("/assets/manifest.json", get(asset_manifest))
        .with_state(app);
    match ui {
        Some(dir) => routes.fallback_service(ServeDir::new(dir)),
        None => routes,
    }
}

// ---- startup ----

/// Packs from a single file or every `*.json` file in a directory.
pub fn load_packs(path: &Path) -> Result<Vec<CoursePack>, CliError> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut packs: Vec<CoursePack> = Vec::new();
    for file in files {
        let pack = load_pack(&file)?;
        if packs.iter().any(|p| p.course_id == pack.course_id) {
            return Err(CliError::Input(format!(
                "{}: course id `{}` already loaded",
                file.display(),
                pack.course_id
            )));
        }
        packs.push(pack);
    }
    Ok(packs)
}

pub fn load_assets(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub struct ServeOptions {
    pub packs: PathBuf,
    pub state: PathBuf,
    pub host: String,
    pub port: u16,
    pub ui: Option<PathBuf>,
    pub assets: Option<PathBuf>,
}

pub fn serve(opts: ServeOptions) -> Result<(), CliError> {
    let packs = load_packs(&opts.packs)?;
    let store = StateStore::open(&opts.state)?;
    let mut app = AppState::new(packs, store, Arc::new(SystemClock));
    if let Some(path) = &opts.assets {
        app = app.with_assets(load_assets(path)?);
    }
    let router = router(app, opts.ui.as_deref());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((opts.host.as_str(), opts.port))
            .await
            .map_err(|e| CliError::Input(format!("bind {}:{}: {e}", opts.host, opts.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Input(e.to_string()))?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Input(e.to_string()))
    })
}

/// Every string reachable in a JSON value, for answer scans.
pub fn json_strings(value: &Value) -> Vec<&str> {
    let mut out = Vec::new();
    let mut stack = vec![value];
    while let Some(v) = stack.pop() {
        match v {
            Value::String(s) => out.push(s.as_str()),
            Value::Array(items) => stack.extend(items),
            Value::Object(map) => {
                for (k, v) in map {
                    out.push(k.as_str());
                    stack.push(v);
                }
            }
            _ => {}
        }
    }
    out
}

/// Ways a lesson payload could give away an exercise's answer: answer fields,
/// the TS answer in order, or the CM answer marked apart from the other
/// options. Empty means clean.
pub fn answer_leaks(payload: &Value, pack: &CoursePack) -> Vec<String> {
    let mut leaks = Vec::new();
    for key in json_strings(payload) {
        if matches!(
            key,
            "answer" | "expected" | "concept_ids" | "source_sentence_id" | "correct"
        ) {
            leaks.push(format!("field `{key}` present"));
        }
    }
    let Some(exercises) = payload.get("exercises").and_then(Value::as_array) else {
        return leaks;
    };
    for view in exercises {
        let Some(id) = view.get("id").and_then(Value::as_str) else {
            leaks.push("exercise without id".into());
            continue;
        };
        let Some(ex) = pack.find_exercise(id) else {
            continue;
        };
        match &ex.answer {
            Answer::Tokens(answer) => {
                let bank: Vec<&str> = view
                    .get("bank")
                    .and_then(Value::as_array)
                    .map(|b| b.iter().filter_map(Value::as_str).collect())
                    .unwrap_or_default();
                if answer.len() > 1 && bank.windows(answer.len()).any(|w| w.iter().eq(answer.iter())) {
                    leaks.push(format!("{id}: bank shows the answer in order"));
                }
                let joined = answer.join(" ");
                if answer.len() > 1 && json_strings(view).iter().any(|s| s.contains(&joined)) {
                    leaks.push(format!("{id}: answer sentence present"));
                }
            }
            Answer::Concept(concept) => {
                if id.contains(concept.as_str()) {
                    leaks.push(format!("{id}: id names the answer"));
                }
                let options = view.get("options").and_then(Value::as_array);
                let mentions = json_strings(view).iter().filter(|s| **s == concept).count();
                let option_ids = options.map_or(0, |o| {
                    o.iter()
                        .filter(|opt| opt.get("concept_id").and_then(Value::as_str) == Some(concept))
                        .count()
                });
                if mentions != option_ids {
                    leaks.push(format!("{id}: answer concept appears outside the options"));
                }
                if let Some(opts) = options {
                    let keys: Vec<Vec<&String>> = opts
                        .iter()
                        .filter_map(Value::as_object)
                        .map(|o| o.keys().collect())
                        .collect();
                    if keys.windows(2).any(|w| w[0] != w[1]) {
                        leaks.push(format!("{id}: options differ in shape"));
                    }
                }
            }
        }
    }
    leaks
}
