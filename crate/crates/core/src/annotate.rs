//! Local labeling service: serves leaf crops in seeded random order and
//! appends acknowledged labels to a JSONL store.
//!
//! HTTP surface:
//! - `GET /api/next?task=suitability|morphology` → `{crop_id, task, image_url}` or `{done: true, task}`
//! - `GET /crops/<crop_id>.png`
//! - `POST /api/labels` with `{crop_id, task, labels, annotator?}`
//! - `GET /api/progress`, `GET /api/contract`
//! - static UI assets at `/` when a UI directory is configured

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::crops;
use crate::error::{Error, Result};
use crate::labels::{MorphologyLabel, CONTRACT_JSON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Suitability,
    Morphology,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Suitability, Task::Morphology];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Suitability => "suitability",
            Task::Morphology => "morphology",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// Validated label payload. Suitability labels are `{"good": bool}`;
/// morphology labels are `{"color", "shape", "splotches"}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Labels {
    Suitability { good: bool },
    Morphology(MorphologyLabel),
}

impl Labels {
    pub fn task(&self) -> Task {
        match self {
            Labels::Suitability { .. } => Task::Suitability,
            Labels::Morphology(_) => Task::Morphology,
        }
    }

    pub fn parse(task: Task, value: &Value) -> Result<Labels> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidInput("labels must be an object".into()))?;
        let expect_keys = |keys: &[&str]| -> Result<()> {
            let got: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
            let want: BTreeSet<&str> = keys.iter().copied().collect();
            if got != want {
                return Err(Error::InvalidInput(format!(
                    "{} labels need exactly the keys {keys:?}",
                    task.as_str()
                )));
            }
            Ok(())
        };
        match task {
            Task::Suitability => {
                expect_keys(&["good"])?;
                let good = obj["good"]
                    .as_bool()
                    .ok_or_else(|| Error::InvalidInput("\"good\" must be a boolean".into()))?;
                Ok(Labels::Suitability { good })
            }
            Task::Morphology => {
                expect_keys(&["color", "shape", "splotches"])?;
                let field = |k: &str| {
                    obj[k]
                        .as_str()
                        .ok_or_else(|| Error::InvalidInput(format!("\"{k}\" must be a string")))
                };
                Ok(Labels::Morphology(MorphologyLabel::from_strs(
                    field("color")?,
                    field("shape")?,
                    field("splotches")?,
                )?))
            }
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Labels::Suitability { good } => json!({ "good": good }),
            Labels::Morphology(m) => {
                let [color, shape, splotches] = m.as_strs();
                json!({ "color": color, "shape": shape, "splotches": splotches })
            }
        }
    }
}

/// One line of the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub crop_id: String,
    pub task: Task,
    pub labels: Value,
    pub timestamp: String,
    pub annotator: String,
}

impl StoreRecord {
    pub fn labels(&self) -> Result<Labels> {
        Labels::parse(self.task, &self.labels)
    }
}

/// Parse a whole store; every line must be a valid record.
pub fn read_store(path: &Path) -> Result<Vec<StoreRecord>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let rec: StoreRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
                row: i + 1,
                column: "labels".into(),
                message: e.to_string(),
            })?;
            rec.labels().map_err(|e| Error::Schema {
                row: i + 1,
                column: "labels".into(),
                message: e.to_string(),
            })?;
            Ok(rec)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelTask {
    pub crop_id: String,
    pub task: Task,
    pub image_url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitError {
    UnknownCrop(String),
    Invalid(String),
    Conflict(String),
    Storage(String),
}

impl SubmitError {
    fn status(&self) -> StatusCode {
        match self {
            SubmitError::UnknownCrop(_) => StatusCode::NOT_FOUND,
            SubmitError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SubmitError::Conflict(_) => StatusCode::CONFLICT,
            SubmitError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn message(&self) -> &str {
        match self {
            SubmitError::UnknownCrop(m)
            | SubmitError::Invalid(m)
            | SubmitError::Conflict(m)
            | SubmitError::Storage(m) => m,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub crops_dir: PathBuf,
    pub store: PathBuf,
    pub seed: u64,
    pub annotator: String,
    pub ui_dir: Option<PathBuf>,
}

impl SessionConfig {
    pub fn new(crops_dir: impl Into<PathBuf>, store: impl Into<PathBuf>) -> Self {
        SessionConfig {
            crops_dir: crops_dir.into(),
            store: store.into(),
            seed: 0,
            annotator: "default".into(),
            ui_dir: None,
        }
    }
}

struct SessionState {
    /// Remaining crops per task, next one last.
    queues: BTreeMap<Task, Vec<String>>,
    keys: BTreeSet<(String, Task, String)>,
    labeled: BTreeMap<Task, BTreeSet<String>>,
    file: File,
}

/// Labeling session over one crops directory. Appends are serialized and
/// fsynced before acknowledgment.
pub struct AnnotationSession {
    cfg: SessionConfig,
    crops: BTreeSet<String>,
    state: Mutex<SessionState>,
}

impl AnnotationSession {
    pub fn open(cfg: SessionConfig) -> Result<Self> {
        let ids = crops::list_crops(&cfg.crops_dir)?;
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no crops in {}",
                cfg.crops_dir.display()
            )));
        }
        let existing = read_store(&cfg.store)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&cfg.store)
            .map_err(|e| Error::io(&cfg.store, e))?;
        let mut keys = BTreeSet::new();
        let mut labeled: BTreeMap<Task, BTreeSet<String>> = Task::ALL.iter().map(|&t| (t, BTreeSet::new())).collect();
        for r in existing {
            labeled.get_mut(&r.task).expect("all tasks").insert(r.crop_id.clone());
            keys.insert((r.crop_id, r.task, r.annotator));
        }
        let queues = Task::ALL
            .iter()
            .enumerate()
            .map(|(i, &task)| {
                let mut order = ids.clone();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64)));
                order.reverse();
                (task, order)
            })
            .collect();
        Ok(AnnotationSession {
            crops: ids.into_iter().collect(),
            cfg,
            state: Mutex::new(SessionState {
                queues,
                keys,
                labeled,
                file,
            }),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn crop_ids(&self) -> impl Iterator<Item = &String> {
        self.crops.iter()
    }

    /// Next unlabeled crop for `task`, each crop at most once per session;
    /// `None` when exhausted.
    pub fn next_task(&self, task: Task) -> Option<LabelTask> {
        let mut st = self.state.lock().expect("session lock poisoned");
        let annotator = self.cfg.annotator.clone();
        loop {
            let id = st.queues.get_mut(&task).expect("all tasks").pop()?;
            if st.keys.contains(&(id.clone(), task, annotator.clone())) {
                continue;
            }
            return Some(LabelTask {
                image_url: format!("/crops/{id}.png"),
                crop_id: id,
                task,
            });
        }
    }

    pub fn submit(&self, crop_id: &str, labels: Labels, annotator: Option<&str>) -> std::result::Result<StoreRecord, SubmitError> {
        if !self.crops.contains(crop_id) {
            return Err(SubmitError::UnknownCrop(format!("unknown crop {crop_id}")));
        }
        let annotator = annotator.unwrap_or(&self.cfg.annotator).to_owned();
        let task = labels.task();
        let mut st = self.state.lock().expect("session lock poisoned");
        let key = (crop_id.to_owned(), task, annotator.clone());
        if st.keys.contains(&key) {
            return Err(SubmitError::Conflict(format!(
                "{crop_id} already has a {} label from {annotator}",
                task.as_str()
            )));
        }
        let record = StoreRecord {
            crop_id: crop_id.to_owned(),
            task,
            labels: labels.to_value(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            annotator,
        };
        let mut line = serde_json::to_string(&record).map_err(|e| SubmitError::Storage(e.to_string()))?;
        line.push('\n');
        // One write per line keeps the file valid JSONL between appends.
        st.file
            .write_all(line.as_bytes())
            .and_then(|()| st.file.sync_data())
            .map_err(|e| SubmitError::Storage(e.to_string()))?;
        st.keys.insert(key);
        st.labeled.get_mut(&task).expect("all tasks").insert(crop_id.to_owned());
        Ok(record)
    }

    pub fn progress(&self) -> BTreeMap<Task, Progress> {
        let st = self.state.lock().expect("session lock poisoned");
        Task::ALL
            .iter()
            .map(|&t| {
                let labeled = st.labeled[&t].iter().filter(|id| self.crops.contains(*id)).count();
                (
                    t,
                    Progress {
                        labeled,
                        total: self.crops.len(),
                    },
                )
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    task: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SubmitBody {
    crop_id: String,
    task: String,
    labels: Value,
    annotator: Option<String>,
}

fn error_response(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn next_handler(State(s): State<Arc<AnnotationSession>>, Query(q): Query<NextQuery>) -> Response {
    let name = q.task.unwrap_or_else(|| "suitability".into());
    let Some(task) = Task::parse(&name) else {
        return error_response(StatusCode::UNPROCESSABLE_ENTITY, &format!("unknown task {name:?}"));
    };
    match s.next_task(task) {
        Some(t) => Json(t).into_response(),
        None => Json(json!({ "done": true, "task": task })).into_response(),
    }
}

async fn crop_handler(State(s): State<Arc<AnnotationSession>>, UrlPath(file): UrlPath<String>) -> Response {
    let Some(id) = file.strip_suffix(".png").filter(|id| s.crops.contains(*id)) else {
        return error_response(StatusCode::NOT_FOUND, "no such crop");
    };
    let path = crops::crop_path(&s.cfg.crops_dir, id);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn submit_handler(
    State(s): State<Arc<AnnotationSession>>,
    body: std::result::Result<Json<SubmitBody>, JsonRejection>,
) -> Response {
    let body = match body {
        Ok(Json(body)) => body,
        Err(e) => {
            return error_response(
                StatusCode::UNPROCESSABLE_ENTITY,
                &format!("body must be {{crop_id, task, labels}}: {}", e.body_text()),
            )
        }
    };
    let parsed = Task::parse(&body.task)
        .ok_or_else(|| SubmitError::Invalid(format!("unknown task {:?}", body.task)))
        .and_then(|task| Labels::parse(task, &body.labels).map_err(|e| SubmitError::Invalid(e.to_string())));
    let result = match parsed {
        // The blocking fsync runs off the async executor.
        Ok(labels) => tokio::task::spawn_blocking(move || s.submit(&body.crop_id, labels, body.annotator.as_deref()))
            .await
            .unwrap_or_else(|e| Err(SubmitError::Storage(e.to_string()))),
        Err(e) => Err(e),
    };
    match result {
        Ok(rec) => (StatusCode::CREATED, Json(json!({ "ok": true, "record": rec }))).into_response(),
        Err(e) => error_response(e.status(), e.message()),
    }
}

async fn progress_handler(State(s): State<Arc<AnnotationSession>>) -> Json<BTreeMap<Task, Progress>> {
    Json(s.progress())
}

async fn contract_handler() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], CONTRACT_JSON).into_response()
}

const PLACEHOLDER_INDEX: &str = "<!doctype html>\n<title>leaf labeling</title>\n\
<p>No UI assets configured. The JSON API is at <code>/api/next</code>, \
<code>/api/labels</code>, <code>/api/progress</code> and <code>/api/contract</code>.</p>\n";

pub fn router(session: Arc<AnnotationSession>) -> Router {
    let ui = session.cfg.ui_dir.clone();
    let api = Router::new()
        .route("/api/next", get(next_handler))
        .route("/api/labels", post(submit_handler))
        .route("/api/progress", get(progress_handler))
        .route("/api/contract", get(contract_handler))
        .route("/crops/{file}", get(crop_handler))
        .with_state(session);
    match ui {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

/// Serve until the process is interrupted.
pub async fn serve(session: Arc<AnnotationSession>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::InvalidInput(format!("cannot bind {addr}: {e}")))?;
    log::info!("annotation service on http://{}", listener.local_addr().map_err(|e| Error::Backend(e.to_string()))?);
    axum::serve(listener, router(session))
        .await
        .map_err(|e| Error::Backend(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{LeafColor, LeafShape, Splotches};

    fn crops_dir(n: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..n {
            image::RgbaImage::new(2, 2)
                .save(dir.path().join(format!("img_{}.png", i + 1)))
                .unwrap();
        }
        dir
    }

    fn session(dir: &Path, seed: u64) -> AnnotationSession {
        let mut cfg = SessionConfig::new(dir, dir.join("labels.jsonl"));
        cfg.seed = seed;
        AnnotationSession::open(cfg).unwrap()
    }

    #[test]
    fn without_replacement_then_done() {
        let dir = crops_dir(3);
        let s = session(dir.path(), 7);
        let mut seen: Vec<String> = (0..3).map(|_| s.next_task(Task::Suitability).unwrap().crop_id).collect();
        assert!(s.next_task(Task::Suitability).is_none());
        seen.sort();
        assert_eq!(seen, ["img_1", "img_2", "img_3"]);
        // Tasks keep independent queues.
        assert!(s.next_task(Task::Morphology).is_some());
    }

    #[test]
    fn seeded_order_replays() {
        let dir = crops_dir(6);
        let order = |seed| {
            let s = session(dir.path(), seed);
            (0..6).map(|_| s.next_task(Task::Morphology).unwrap().crop_id).collect::<Vec<_>>()
        };
        assert_eq!(order(3), order(3));
    }

    #[test]
    fn empty_crop_dir_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(AnnotationSession::open(SessionConfig::new(dir.path(), dir.path().join("s.jsonl"))).is_err());
    }

    #[test]
    fn conflicts_and_invalid_labels_leave_store_unchanged() {
        let dir = crops_dir(2);
        let s = session(dir.path(), 0);
        s.submit("img_1", Labels::Suitability { good: true }, None).unwrap();
        let before = std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
        assert!(matches!(
            s.submit("img_1", Labels::Suitability { good: false }, None),
            Err(SubmitError::Conflict(_))
        ));
        assert!(matches!(
            s.submit("img_9", Labels::Suitability { good: false }, None),
            Err(SubmitError::UnknownCrop(_))
        ));
        assert!(Labels::parse(Task::Morphology, &json!({"color": "yellow", "shape": "round", "splotches": "none"})).is_err());
        assert!(Labels::parse(Task::Suitability, &json!({"good": "yes"})).is_err());
        assert_eq!(std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap(), before);
        let m = Labels::Morphology(MorphologyLabel::new(LeafColor::Yellow, LeafShape::Oblong, Splotches::Low));
        s.submit("img_1", m.clone(), None).unwrap();
        assert_eq!(s.progress()[&Task::Suitability], Progress { labeled: 1, total: 2 });
        assert_eq!(s.progress()[&Task::Morphology], Progress { labeled: 1, total: 2 });
        let store = read_store(&dir.path().join("labels.jsonl")).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store[1].labels().unwrap(), m);
    }

    #[test]
    fn reopened_session_skips_labeled_crops() {
        let dir = crops_dir(2);
        session(dir.path(), 0).submit("img_2", Labels::Suitability { good: true }, None).unwrap();
        let s = session(dir.path(), 0);
        assert_eq!(s.next_task(Task::Suitability).unwrap().crop_id, "img_1");
        assert!(s.next_task(Task::Suitability).is_none());
        assert_eq!(s.progress()[&Task::Suitability].labeled, 1);
    }
}
