use std::collections::BTreeSet;
use std::path::{Path as FsPath, PathBuf};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clipmap_core::session::{BatchSelection, PaletteEntry, PoolCounts, ToaEntry};
use clipmap_core::{ClipId, LassoPolygon, MetricsReport, SessionState, TsneConfig};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::jobs::JobStatus;
use crate::state::{AppState, JobRequest};

type ApiResult<T> = std::result::Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/embedding", get(get_embedding))
        .route("/api/labels", post(post_labels))
        .route("/api/round", post(post_round))
        .route("/api/toa", post(post_toa))
        .route("/api/batch", post(post_batch))
        .route("/api/metrics", get(get_metrics))
        .route("/api/export", get(get_export))
        .route("/api/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/thumbs/{clip_id}", get(get_thumbnail))
        .with_state(state)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub round: u32,
    pub clip_count: usize,
    pub video_count: usize,
    pub pools: PoolCounts,
    pub palette: Vec<PaletteEntry>,
    pub toa_log: Vec<ToaEntry>,
    pub cumulative_toa_seconds: f64,
    pub budget_seconds: Option<f64>,
    pub batches: Vec<clipmap_core::session::Batch>,
    pub embedding_round: Option<u32>,
    pub embedding_stale: bool,
    pub active_job: Option<JobStatus>,
    pub tsne: TsneConfig,
    /// SHA-256 of the serialized session.
    pub fingerprint: String,
}

async fn get_session(State(state): State<AppState>) -> ApiResult<Json<SessionSummary>> {
    let s = state.snapshot();
    Ok(Json(SessionSummary {
        round: s.round,
        clip_count: s.dataset.len(),
        video_count: s.dataset.videos.len(),
        pools: s.pool_counts(),
        palette: s.palette().to_vec(),
        toa_log: s.toa_log().to_vec(),
        cumulative_toa_seconds: s.cumulative_toa(),
        budget_seconds: s.budget_seconds,
        batches: s.batches().to_vec(),
        embedding_round: s.embedding.as_ref().map(|v| v.round),
        embedding_stale: s.embedding_stale(),
        active_job: state.active_job(),
        tsne: s.tsne.clone(),
        fingerprint: s.fingerprint()?,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub clip_id: ClipId,
    pub x: f64,
    pub y: f64,
    pub current_label: String,
    pub thumbnail_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPayload {
    pub round: u32,
    pub stale: bool,
    pub points: Vec<EmbeddingPoint>,
}

fn thumbnail_url(id: &ClipId) -> String {
    format!("/thumbs/{}", id.to_string().replace('#', "%23"))
}

async fn get_embedding(State(state): State<AppState>) -> ApiResult<Json<EmbeddingPayload>> {
    let s = state.snapshot();
    let Some(view) = &s.embedding else {
        let job = state.active_job().map(|j| j.job_id);
        return Err(
            ApiError::new(StatusCode::CONFLICT, "not_ready", "no embedding has been computed yet").with_job(job),
        );
    };
    let points = view
        .clip_ids
        .iter()
        .enumerate()
        .map(|(row, id)| {
            let [x, y] = view.point(row);
            let has_thumb = s.dataset.clip(id).is_some_and(|c| c.thumbnail_ref.is_some());
            EmbeddingPoint {
                clip_id: id.clone(),
                x,
                y,
                current_label: s.display_label(id).to_string(),
                thumbnail_url: has_thumb.then(|| thumbnail_url(id)),
            }
        })
        .collect();
    Ok(Json(EmbeddingPayload {
        round: view.round,
        stale: s.embedding_stale(),
        points,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    #[serde(default)]
    pub clip_ids: Option<Vec<ClipId>>,
    #[serde(default)]
    pub polygon: Option<Vec<[f64; 2]>>,
    pub class_name: String,
    #[serde(default)]
    pub only_unlabeled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub affected: Vec<ClipId>,
    pub labeled: usize,
    pub unlabeled: usize,
}

async fn post_labels(
    State(state): State<AppState>,
    payload: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<Json<LabelResponse>> {
    let req = body(payload)?;
    let polygon = match (&req.clip_ids, req.polygon) {
        (Some(_), None) => None,
        (None, Some(vertices)) => Some(LassoPolygon::new(vertices)?),
        _ => return Err(ApiError::bad_request("give exactly one of clip_ids or polygon")),
    };
    let affected = state.mutate(|s| {
        let ids = match &polygon {
            Some(p) => s.lasso_select(p, req.only_unlabeled)?,
            None => {
                let unique: BTreeSet<ClipId> = req.clip_ids.iter().flatten().cloned().collect();
                unique.into_iter().collect()
            }
        };
        s.assign_label(&ids, &req.class_name, clipmap_core::session::now_millis())?;
        Ok(ids)
    })?;
    let counts = state.snapshot().pool_counts();
    Ok(Json(LabelResponse {
        affected,
        labeled: counts.labeled,
        unlabeled: counts.unlabeled,
    }))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoundRequest {
    #[serde(default)]
    pub manifest_path: Option<PathBuf>,
    /// Oracle time spent in the round being closed.
    #[serde(default)]
    pub toa_seconds: Option<f64>,
}

async fn post_round(
    State(state): State<AppState>,
    payload: Result<Json<RoundRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let req = body(payload)?;
    let toa = req.toa_seconds;
    let job = state.start_job(
        JobRequest::Round {
            manifest: req.manifest_path,
        },
        |s| {
            if let Some(seconds) = toa {
                s.record_toa(seconds)?;
            }
            Ok(())
        },
    )?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToaRequest {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToaResponse {
    pub cumulative_toa_seconds: f64,
    pub toa_log: Vec<ToaEntry>,
}

async fn post_toa(
    State(state): State<AppState>,
    payload: Result<Json<ToaRequest>, JsonRejection>,
) -> ApiResult<Json<ToaResponse>> {
    let req = body(payload)?;
    state.mutate(|s| s.record_toa(req.seconds))?;
    let s = state.snapshot();
    Ok(Json(ToaResponse {
        cumulative_toa_seconds: s.cumulative_toa(),
        toa_log: s.toa_log().to_vec(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRequest {
    pub n_videos: usize,
    pub seed: u64,
}

async fn post_batch(
    State(state): State<AppState>,
    payload: Result<Json<BatchRequest>, JsonRejection>,
) -> ApiResult<Json<BatchSelection>> {
    let req = body(payload)?;
    Ok(Json(
        state.mutate(|s| Ok(s.select_unlabeled_batch(req.n_videos, req.seed)))?,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsResponse {
    #[serde(flatten)]
    pub report: MetricsReport,
    pub cumulative_toa_seconds: f64,
    pub video_minutes: f64,
}

async fn get_metrics(State(state): State<AppState>) -> Json<MetricsResponse> {
    let s = state.snapshot();
    Json(MetricsResponse {
        report: s.metrics_report(state.config().metrics_seed),
        cumulative_toa_seconds: s.cumulative_toa(),
        video_minutes: s.dataset.video_minutes(),
    })
}

async fn get_export(State(state): State<AppState>) -> ApiResult<Response> {
    let text = state.snapshot().export_json()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn get_job(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobStatus>> {
    state
        .job(id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no job {id}")))
}

async fn cancel_job(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<JobStatus>> {
    let job = state
        .job(id)
        .ok_or_else(|| ApiError::not_found(format!("no job {id}")))?;
    if state.active_job().map(|j| j.job_id) == Some(id) {
        state.cancel_active();
    }
    Ok(Json(job))
}

fn content_type(path: &FsPath) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

async fn get_thumbnail(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<Response> {
    let id: ClipId = raw
        .parse()
        .map_err(|_| ApiError::bad_request(format!("bad clip id {raw:?}")))?;
    let s: std::sync::Arc<SessionState> = state.snapshot();
    let path = s
        .dataset
        .clip(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown clip {id}")))?
        .thumbnail_ref
        .clone()
        .ok_or_else(|| ApiError::not_found(format!("clip {id} has no thumbnail")))?;
    let path = PathBuf::from(path);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::not_found(format!("thumbnail {}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}
