//! Review API over a dataset [`Store`].
//!
//! ```text
//! GET   /api/sentences?clip_id=&status=&q=&page=&page_size=
//! GET   /api/sentences/{id}
//! PATCH /api/sentences/{id}          {"status"?, "english_text"?, "expected_revision"}
//! GET   /api/sentences/{id}/pose?from=&to=
//! GET   /api/stats
//! ```
//!
//! Every mutation goes through [`Store::update`], so concurrent reviewers
//! are arbitrated by the record revision: the loser of a race gets `409`
//! with the current revision in the body.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sdw_core::pose::{self, PoseError};
use sdw_core::store::{
    DatasetStats, ReviewEdit, ReviewStatus, SentenceRecord, StatusSet, Store, StoreError,
};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePage {
    pub items: Vec<SentenceRecord>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceFilter {
    pub clip_id: Option<String>,
    pub status: Option<ReviewStatus>,
    pub text_query: Option<String>,
}

impl SentenceFilter {
    fn matches(&self, record: &SentenceRecord, query_lower: Option<&str>) -> bool {
        self.clip_id.as_ref().is_none_or(|c| *c == record.clip_id)
            && self.status.is_none_or(|s| s == record.status)
            && query_lower.is_none_or(|q| record.english_text.to_lowercase().contains(q))
    }
}

/// Body of `PATCH /api/sentences/{id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdatePatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ReviewStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english_text: Option<String>,
    pub expected_revision: u64,
}

/// Pose facts taken from the `SDWP` header alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMeta {
    pub frame_count: u32,
    pub fps: f32,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceDetail {
    #[serde(flatten)]
    pub record: SentenceRecord,
    pub pose: Option<PoseMeta>,
}

/// Filters and pages the store in browse order (clip, then start time).
pub fn list_sentences(
    store: &Store,
    filter: &SentenceFilter,
    page: usize,
    page_size: usize,
) -> Result<SentencePage, ApiError> {
    if page < 1 {
        return Err(ApiError::bad_request("page starts at 1"));
    }
    if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
        return Err(ApiError::bad_request(format!(
            "page_size must be between 1 and {MAX_PAGE_SIZE}"
        )));
    }
    let query = filter.text_query.as_ref().map(|q| q.to_lowercase());
    let matching: Vec<SentenceRecord> = store
        .records()
        .into_iter()
        .filter(|r| filter.matches(r, query.as_deref()))
        .collect();
    let total = matching.len();
    let items = matching
        .into_iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .collect();
    Ok(SentencePage {
        items,
        total,
        page,
        page_size,
    })
}

pub fn get_sentence(store: &Store, sentence_id: &str) -> Result<SentenceDetail, ApiError> {
    let record = store
        .get(sentence_id)
        .ok_or_else(|| StoreError::NotFound(sentence_id.to_owned()))?;
    let pose = match store.pose_header(sentence_id) {
        Ok(header) => header.map(|h| PoseMeta {
            frame_count: h.frame_count,
            fps: h.fps,
            duration_ms: h.duration_ms(),
        }),
        Err(StoreError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    Ok(SentenceDetail { record, pose })
}

pub fn update_sentence(
    store: &Store,
    sentence_id: &str,
    patch: &UpdatePatch,
) -> Result<SentenceRecord, ApiError> {
    let edit = ReviewEdit {
        status: patch.status,
        english_text: patch.english_text.clone(),
    };
    Ok(store.update(sentence_id, &edit, patch.expected_revision)?)
}

/// Frames `from..=to` as wire-format JSON lines. Bounds default to the
/// whole sequence.
pub fn get_pose_frames(
    store: &Store,
    sentence_id: &str,
    from: Option<u32>,
    to: Option<u32>,
) -> Result<Vec<u8>, ApiError> {
    let header = store
        .pose_header(sentence_id)?
        .ok_or_else(|| StoreError::NotFound(format!("{sentence_id} pose")))?;
    let from = from.unwrap_or(0);
    let to = match to {
        Some(to) => to,
        None if header.frame_count == 0 => {
            return Err(StoreError::from(PoseError::FrameRange {
                from,
                to: 0,
                frame_count: 0,
            })
            .into())
        }
        None => header.frame_count - 1,
    };
    let frames = store.pose_frames(sentence_id, from, to)?;
    let mut out = Vec::new();
    pose::write_wire_frames(&frames, &mut out).expect("writing to memory");
    Ok(out)
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: serde_json::Value,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({"error": "bad_request", "message": message.into()}),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let (status, body) = match &e {
            StoreError::NotFound(_) => (
                StatusCode::NOT_FOUND,
                json!({"error": "not_found", "message": message}),
            ),
            StoreError::Conflict {
                current_revision, ..
            } => (
                StatusCode::CONFLICT,
                json!({"error": "conflict", "message": message, "current_revision": current_revision}),
            ),
            StoreError::Validation(_) => (
                StatusCode::BAD_REQUEST,
                json!({"error": "validation", "message": message}),
            ),
            StoreError::Pose(PoseError::FrameRange { .. }) => (
                StatusCode::BAD_REQUEST,
                json!({"error": "frame_range", "message": message}),
            ),
            _ => {
                tracing::error!("{message}");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    json!({"error": "internal", "message": message}),
                )
            }
        };
        Self { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type AppState = Arc<Store>;

fn parse_param<T: std::str::FromStr>(
    params: &HashMap<String, String>,
    name: &str,
) -> Result<Option<T>, ApiError> {
    match params.get(name).map(|v| v.trim()).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("invalid `{name}`: {v}"))),
    }
}

async fn list_handler(
    State(store): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<SentencePage>, ApiError> {
    let status = match params.get("status").map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => None,
        Some(s) => Some(
            s.parse::<ReviewStatus>()
                .map_err(|e| ApiError::bad_request(e.to_string()))?,
        ),
    };
    let filter = SentenceFilter {
        clip_id: params.get("clip_id").filter(|c| !c.is_empty()).cloned(),
        status,
        text_query: params.get("q").filter(|q| !q.is_empty()).cloned(),
    };
    let page = parse_param(&params, "page")?.unwrap_or(1);
    let page_size = parse_param(&params, "page_size")?.unwrap_or(DEFAULT_PAGE_SIZE);
    list_sentences(&store, &filter, page, page_size).map(Json)
}

async fn get_handler(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SentenceDetail>, ApiError> {
    get_sentence(&store, &id).map(Json)
}

async fn patch_handler(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SentenceRecord>, ApiError> {
    let patch: UpdatePatch = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid patch: {e}")))?;
    tokio::task::spawn_blocking(move || update_sentence(&store, &id, &patch))
        .await
        .expect("update task panicked")
        .map(Json)
}

async fn pose_handler(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let from = parse_param(&params, "from")?;
    let to = parse_param(&params, "to")?;
    let body = tokio::task::spawn_blocking(move || get_pose_frames(&store, &id, from, to))
        .await
        .expect("pose task panicked")?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn stats_handler(State(store): State<AppState>) -> Json<DatasetStats> {
    Json(store.stats(&StatusSet::default()))
}

/// Builds the API router. When `ui_dir` is given, its files are served at
/// `/` for any path the API does not claim.
pub fn router(store: Arc<Store>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sentences", get(list_handler))
        .route("/api/sentences/{id}", get(get_handler).patch(patch_handler))
        .route("/api/sentences/{id}/pose", get(pose_handler))
        .route("/api/stats", get(stats_handler))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(
    store: Arc<Store>,
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir)).await
}
