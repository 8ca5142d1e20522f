//! HTTP API over a [`Course`], with static-token authentication and
//! single-file snapshot persistence.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use peerassess::scoring::ScoreBreakdown;
use peerassess::service::save_snapshot;
use peerassess::workflow::Task;
use peerassess::{
    CaseId, CaseStatus, Course, Deadlines, DocumentKind, Error, MotivationParams, Override,
    ScoreSheet, StudentId, SubmissionPayload, TaskId, WeightConfig,
};

/// Who a bearer token belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Principal {
    Teacher,
    Student(StudentId),
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct AppState {
    course: RwLock<Course>,
    snapshot: Option<PathBuf>,
    tokens: HashMap<String, Principal>,
    clock: Clock,
}

impl AppState {
    pub fn new(course: Course, tokens: HashMap<String, Principal>) -> Self {
        AppState {
            course: RwLock::new(course),
            snapshot: None,
            tokens,
            clock: Arc::new(Utc::now),
        }
    }

    /// Persist every accepted mutation to `path` before it becomes visible.
    pub fn with_snapshot(mut self, path: impl Into<PathBuf>) -> Self {
        self.snapshot = Some(path.into());
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn course(&self) -> Course {
        self.course.read().expect("course lock poisoned").clone()
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    /// Applies `f` to a copy, persists it, then swaps it in. A failure at any
    /// step leaves the served state untouched.
    fn mutate<T>(&self, f: impl FnOnce(&mut Course) -> peerassess::Result<T>) -> Result<T, ApiError> {
        let mut guard = self.course.write().expect("course lock poisoned");
        let mut next = guard.clone();
        let out = f(&mut next)?;
        if let Some(path) = &self.snapshot {
            save_snapshot(&next, path)?;
        }
        *guard = next;
        Ok(out)
    }

    fn read<T>(&self, f: impl FnOnce(&Course) -> peerassess::Result<T>) -> Result<T, ApiError> {
        let guard = self.course.read().expect("course lock poisoned");
        Ok(f(&guard)?)
    }

    fn principal(&self, headers: &HeaderMap) -> Result<Principal, ApiError> {
        let token = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing bearer token"))?;
        self.tokens
            .get(token.trim())
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unknown token"))
    }

    fn teacher(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        match self.principal(headers)? {
            Principal::Teacher => Ok(()),
            Principal::Student(_) => Err(ApiError::forbidden("teacher only")),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn forbidden(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::FORBIDDEN, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownTask(_) | Error::UnknownStudent(_) | Error::UnknownCase(_) => StatusCode::NOT_FOUND,
            Error::UnauthorizedSlot { .. } => StatusCode::FORBIDDEN,
            Error::WrongState { .. }
            | Error::NotAssigned(_)
            | Error::LateResubmission { .. }
            | Error::DeadlinesOpen(_)
            | Error::NoSources(_)
            | Error::CaseResolved(_)
            | Error::DuplicateStudent(_) => StatusCode::CONFLICT,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

#[derive(Debug, Deserialize)]
pub struct CreateTask {
    pub title: String,
    pub deadlines: Deadlines,
    pub fan_out_k: usize,
    #[serde(default)]
    pub params: Option<MotivationParams>,
    #[serde(default)]
    pub weights: Option<WeightConfig>,
}

#[derive(Debug, Deserialize)]
pub struct AssignBody {
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
pub struct SubmitBody {
    pub kind: DocumentKind,
    #[serde(default)]
    pub counterpart_id: Option<StudentId>,
    pub payload: SubmissionPayload,
    /// Only teachers may submit on someone else's behalf.
    #[serde(default)]
    pub submitter_id: Option<StudentId>,
}

#[derive(Debug, Default, Deserialize)]
pub struct FinalizeBody {
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Deserialize)]
pub struct ResolveBody {
    #[serde(default)]
    pub overrides: Vec<Override>,
    pub note: String,
}

#[derive(Debug, Deserialize)]
pub struct WarnBody {
    pub reviewer_id: StudentId,
    pub note: String,
}

#[derive(Debug, Deserialize)]
pub struct CaseFilter {
    pub status: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct SheetQuery {
    pub task: u32,
}

#[derive(Debug, Serialize)]
pub struct SheetView {
    pub sheet: ScoreSheet,
    pub breakdown: ScoreBreakdown,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tasks", post(create_task))
        .route("/tasks/{id}/assignments", post(assign))
        .route("/tasks/{id}/advance", post(advance))
        .route("/tasks/{id}/submissions", post(submit))
        .route("/tasks/{id}/finalize", post(finalize))
        .route("/tasks/{id}/scores", get(scores))
        .route("/tasks/{id}/consensus", get(consensus))
        .route("/radicalness", get(radicalness))
        .route("/arbitrations", get(arbitrations))
        .route("/arbitrations/{case_id}/resolve", post(resolve))
        .route("/warnings", post(warn))
        .route("/students/{id}/sheet", get(student_sheet))
        .with_state(state)
}

async fn create_task(State(s): Shared, headers: HeaderMap, Json(body): Json<CreateTask>) -> ApiResult<(StatusCode, Json<Task>)> {
    s.teacher(&headers)?;
    let task = s.mutate(|c| {
        let id = c.create_task(
            body.title,
            body.deadlines,
            body.fan_out_k,
            body.params.unwrap_or_default(),
            body.weights.unwrap_or_default(),
        )?;
        c.task(id).cloned()
    })?;
    Ok((StatusCode::CREATED, Json(task)))
}

async fn assign(State(s): Shared, headers: HeaderMap, Path(id): Path<u32>, Json(body): Json<AssignBody>) -> ApiResult<Json<Value>> {
    s.teacher(&headers)?;
    let now = s.now();
    let assignment = s.mutate(|c| c.assign_reviewers(TaskId(id), body.seed, now).cloned())?;
    Ok(Json(json!(assignment)))
}

async fn advance(State(s): Shared, headers: HeaderMap, Path(id): Path<u32>) -> ApiResult<Json<Value>> {
    s.teacher(&headers)?;
    let now = s.now();
    let state = s.mutate(|c| c.advance_task(TaskId(id), now))?;
    Ok(Json(json!({ "task_id": id, "state": state })))
}

async fn submit(State(s): Shared, headers: HeaderMap, Path(id): Path<u32>, Json(body): Json<SubmitBody>) -> ApiResult<(StatusCode, Json<Value>)> {
    let submitter = match (s.principal(&headers)?, body.submitter_id) {
        (Principal::Student(me), None) => me,
        (Principal::Student(me), Some(other)) if other == me => me,
        (Principal::Student(_), Some(_)) => return Err(ApiError::forbidden("students may only submit their own documents")),
        (Principal::Teacher, Some(other)) => other,
        (Principal::Teacher, None) => {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "submitter_id is required"))
        }
    };
    let now = s.now();
    let sub = s.mutate(|c| {
        c.submit_document(TaskId(id), body.kind, &submitter, body.counterpart_id.as_ref(), body.payload, now)
            .cloned()
    })?;
    Ok((StatusCode::CREATED, Json(json!(sub))))
}

async fn finalize(State(s): Shared, headers: HeaderMap, Path(id): Path<u32>, body: Option<Json<FinalizeBody>>) -> ApiResult<Json<Value>> {
    let force = body.map(|b| b.force).unwrap_or(false);
    if force {
        s.teacher(&headers)?;
    } else {
        s.principal(&headers)?;
    }
    let now = s.now();
    let out = s.mutate(|c| c.finalize_task(TaskId(id), now, force))?;
    Ok(Json(json!({
        "task_id": id,
        "consensus": out.consensus,
        "cases": out.cases,
        "sheets": out.sheets,
    })))
}

async fn scores(State(s): Shared, headers: HeaderMap, Path(id): Path<u32>) -> ApiResult<Json<Vec<ScoreSheet>>> {
    s.teacher(&headers)?;
    Ok(Json(s.read(|c| c.sheets(TaskId(id)).map(<[_]>::to_vec))?))
}

async fn consensus(State(s): Shared, headers: HeaderMap, Path(id): Path<u32>) -> ApiResult<Json<Value>> {
    s.teacher(&headers)?;
    Ok(Json(s.read(|c| c.consensus_report(TaskId(id)).map(|r| json!(r)))?))
}

async fn radicalness(State(s): Shared, headers: HeaderMap) -> ApiResult<Json<Value>> {
    s.teacher(&headers)?;
    let report = s.read(|c| Ok(c.radicalness.clone()))?;
    match report {
        Some(r) => Ok(Json(json!(r))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "no finalized task yet")),
    }
}

async fn arbitrations(State(s): Shared, headers: HeaderMap, Query(filter): Query<CaseFilter>) -> ApiResult<Json<Value>> {
    s.teacher(&headers)?;
    let status = match filter.status.as_deref() {
        None | Some("all") => None,
        Some("open") => Some(CaseStatus::Open),
        Some("resolved") => Some(CaseStatus::Resolved),
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("unknown status `{other}`; expected open, resolved or all"),
            ))
        }
    };
    let cases = s.read(|c| {
        Ok(match status {
            Some(CaseStatus::Open) => c.open_cases().into_iter().cloned().collect::<Vec<_>>(),
            Some(st) => c.cases.iter().filter(|x| x.status == st).cloned().collect(),
            None => c.cases.clone(),
        })
    })?;
    Ok(Json(json!(cases)))
}

async fn resolve(State(s): Shared, headers: HeaderMap, Path(case_id): Path<u32>, Json(body): Json<ResolveBody>) -> ApiResult<Json<Value>> {
    s.teacher(&headers)?;
    let now = s.now();
    let sheets = s.mutate(|c| {
        c.resolve_arbitration(CaseId(case_id), body.overrides, body.note, now)?;
        let case = c.case(CaseId(case_id))?.clone();
        let sheets = c.sheets(case.task_id)?.to_vec();
        Ok(json!({ "case": case, "sheets": sheets }))
    })?;
    Ok(Json(sheets))
}

async fn warn(State(s): Shared, headers: HeaderMap, Json(body): Json<WarnBody>) -> ApiResult<(StatusCode, Json<Value>)> {
    s.teacher(&headers)?;
    let now = s.now();
    let w = s.mutate(|c| c.issue_warning(&body.reviewer_id, body.note, now).cloned())?;
    Ok((StatusCode::CREATED, Json(json!(w))))
}

async fn student_sheet(
    State(s): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<SheetQuery>,
) -> ApiResult<Json<SheetView>> {
    let student = StudentId::new(id);
    match s.principal(&headers)? {
        Principal::Teacher => {}
        Principal::Student(me) if me == student => {}
        Principal::Student(_) => return Err(ApiError::forbidden("students may only read their own sheet")),
    }
    let view = s.read(|c| {
        let sheet = c.sheet(&student, TaskId(q.task))?.clone();
        let breakdown = sheet.breakdown(&c.task(TaskId(q.task))?.weights);
        Ok(SheetView { sheet, breakdown })
    })?;
    Ok(Json(view))
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
