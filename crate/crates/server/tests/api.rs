use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use clipmap_core::ingest::write_features;
use clipmap_core::model::make_clips;
use clipmap_core::{ClipId, Dataset, LassoPolygon, SessionState, TsneConfig, VideoMeta, UNLABELED};
use clipmap_server::{
    router, AppState, EmbeddingPayload, JobRequest, JobState, JobStatus, LabelResponse, ServerConfig, SessionSummary,
};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const CLIPS_PER_VIDEO: u64 = 20;

/// Three videos, each a tight blob far from the others.
fn cluster_dataset(thumb_dir: Option<&std::path::Path>) -> Dataset {
    let mut metas = BTreeMap::new();
    let mut clips = Vec::new();
    let mut features = Vec::new();
    for v in 0..3usize {
        let meta = VideoMeta::new(format!("cluster{v}"), 30.0, 32 * CLIPS_PER_VIDEO);
        for (i, mut clip) in make_clips(&meta, 32).unwrap().into_iter().enumerate() {
            for d in 0..8 {
                let jitter = ((i * 7 + d * 3) % 11) as f32 * 0.05;
                features.push(if d == v { 20.0 } else { 0.0 } + jitter);
            }
            if let Some(dir) = thumb_dir {
                let path = dir.join(format!("{}_{}.png", v, i));
                std::fs::write(&path, format!("png-{v}-{i}")).unwrap();
                clip.thumbnail_ref = Some(path.to_string_lossy().into_owned());
            }
            clips.push(clip);
        }
        metas.insert(meta.video_id.clone(), meta);
    }
    Dataset::new(metas, clips, features, 8).unwrap()
}

fn small_tsne(iterations: usize) -> TsneConfig {
    TsneConfig {
        perplexity: 5.0,
        learning_rate: 10.0,
        iterations,
        exaggeration_iters: iterations.min(100),
        seed: 3,
        ..TsneConfig::default()
    }
}

fn app_with(session: SessionState, config: ServerConfig) -> (AppState, Router) {
    let state = AppState::new(session, config);
    (state.clone(), router(state))
}

fn fresh_app() -> (AppState, Router) {
    let mut session = SessionState::new(cluster_dataset(None), None);
    session.tsne = small_tsne(300);
    app_with(session, ServerConfig::default())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn wait_for(state: &AppState, id: u64) -> JobStatus {
    let start = Instant::now();
    loop {
        let job = state.job(id).unwrap();
        if job.state.is_terminal() {
            return job;
        }
        assert!(start.elapsed() < Duration::from_secs(60), "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

async fn embedded_app() -> (AppState, Router) {
    let (state, app) = fresh_app();
    let job = state.start_job(JobRequest::Embed, |_| Ok(())).unwrap();
    assert_eq!(wait_for(&state, job.job_id).await.state, JobState::Done);
    (state, app)
}

async fn fingerprint(app: &Router) -> String {
    let (_, v) = call_json(app, Method::GET, "/api/session", None).await;
    v["fingerprint"].as_str().unwrap().to_string()
}

fn cluster_polygon(state: &AppState, video: &str) -> Vec<[f64; 2]> {
    let s = state.snapshot();
    let view = s.embedding.as_ref().unwrap();
    let rows: Vec<usize> = (0..view.clip_ids.len())
        .filter(|&r| view.clip_ids[r].video_id == video)
        .collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &r in &rows {
        let p = view.point(r);
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let pad = 0.5;
    vec![
        [lo[0] - pad, lo[1] - pad],
        [hi[0] + pad, lo[1] - pad],
        [hi[0] + pad, hi[1] + pad],
        [lo[0] - pad, hi[1] + pad],
    ]
}

#[tokio::test]
async fn embedding_not_ready_reports_job() {
    let (state, app) = fresh_app();
    let (status, body) = call_json(&app, Method::GET, "/api/embedding", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "not_ready");
    assert!(body.get("job_id").is_none());

    let job = state.start_job(JobRequest::Embed, |_| Ok(())).unwrap();
    let (status, body) = call_json(&app, Method::GET, "/api/embedding", None).await;
    if status == StatusCode::CONFLICT {
        assert_eq!(body["job_id"], job.job_id);
    }
    wait_for(&state, job.job_id).await;
}

#[tokio::test]
async fn fresh_embedding_is_all_unlabeled_in_clip_order() {
    let (state, app) = embedded_app().await;
    let (status, body) = call_json(&app, Method::GET, "/api/embedding", None).await;
    assert_eq!(status, StatusCode::OK);
    let payload: EmbeddingPayload = serde_json::from_value(body).unwrap();
    let s = state.snapshot();
    let order: Vec<&ClipId> = s.dataset.clips().iter().map(|c| &c.clip_id).collect();
    assert_eq!(payload.points.iter().map(|p| &p.clip_id).collect::<Vec<_>>(), order);
    assert!(payload.points.iter().all(|p| p.current_label == UNLABELED));
    assert!(payload.points.iter().all(|p| p.thumbnail_url.is_none()));
    assert_eq!(s.round, 0, "an embed job does not advance the round");
}

#[tokio::test]
async fn explicit_ids_get_class() {
    let (state, app) = embedded_app().await;
    let ids: Vec<ClipId> = state.snapshot().dataset.clips()[..5]
        .iter()
        .map(|c| c.clip_id.clone())
        .collect();
    let (status, body) = call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "clip_ids": ids, "class_name": "kayaking" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let resp: LabelResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.affected, ids);
    assert_eq!((resp.labeled, resp.unlabeled), (5, 55));

    let (_, body) = call_json(&app, Method::GET, "/api/embedding", None).await;
    let payload: EmbeddingPayload = serde_json::from_value(body).unwrap();
    for p in &payload.points {
        let expected = if ids.contains(&p.clip_id) {
            "kayaking"
        } else {
            UNLABELED
        };
        assert_eq!(p.current_label, expected);
    }
}

#[tokio::test]
async fn polygon_selection_matches_lasso_select() {
    let (state, app) = embedded_app().await;
    let vertices = cluster_polygon(&state, "cluster1");
    let expected = state
        .snapshot()
        .lasso_select(&LassoPolygon::new(vertices.clone()).unwrap(), false)
        .unwrap();
    assert_eq!(expected.len(), CLIPS_PER_VIDEO as usize);
    assert!(expected.iter().all(|id| id.video_id == "cluster1"));

    let (status, body) = call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "polygon": vertices, "class_name": "kayaking" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let resp: LabelResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.affected, expected);
    assert_eq!(resp.labeled, expected.len());

    // Second lasso over the same region with only_unlabeled selects nothing.
    let (_, body) = call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "polygon": vertices, "class_name": "zumba", "only_unlabeled": true })),
    )
    .await;
    assert_eq!(body["affected"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn empty_polygon_interior_is_success() {
    let (_state, app) = embedded_app().await;
    let far = json!([[1e6, 1e6], [1e6 + 1.0, 1e6], [1e6, 1e6 + 1.0]]);
    let (status, body) = call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "polygon": far, "class_name": "kayaking" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["affected"], json!([]));
    assert_eq!(body["labeled"], 0);
}

#[tokio::test]
async fn failed_mutations_leave_state_identical() {
    let (state, app) = embedded_app().await;
    let before = fingerprint(&app).await;

    let mut ids: Vec<Value> = state.snapshot().dataset.clips()[..3]
        .iter()
        .map(|c| json!(c.clip_id))
        .collect();
    ids.push(json!("ghost#0"));
    let (status, body) = call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "clip_ids": ids, "class_name": "kayaking" })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");

    let bad_polygons = [
        json!({ "polygon": [[0.0, 0.0], [1.0, 1.0]], "class_name": "a" }),
        json!({ "polygon": [[0.0, 0.0], [1.0, 1.0], "x"], "class_name": "a" }),
        json!({ "polygon": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], "clip_ids": [], "class_name": "a" }),
        json!({ "class_name": "a" }),
        json!({ "clip_ids": [], "class_name": UNLABELED }),
    ];
    for req in bad_polygons {
        let (status, body) = call_json(&app, Method::POST, "/api/labels", Some(req.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{req} -> {body}");
        assert!(body["message"].is_string());
    }
    let (status, _) = call(&app, Method::POST, "/api/labels", Some(json!("not an object"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, Method::POST, "/api/toa", Some(json!({ "seconds": -1.0 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    assert_eq!(fingerprint(&app).await, before);
}

#[tokio::test]
async fn round_swaps_embedding_and_advances() {
    let (state, app) = embedded_app().await;
    let old_round = state.snapshot().round;
    let (status, body) = call_json(
        &app,
        Method::POST,
        "/api/round",
        Some(json!({ "toa_seconds": 42.0 * 60.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let job: JobStatus = serde_json::from_value(body).unwrap();
    assert_eq!(job.kind, clipmap_server::JobKind::Embed);
    let done = wait_for(&state, job.job_id).await;
    assert_eq!(done.state, JobState::Done, "{:?}", done.message);
    assert_eq!(done.progress, 1.0);

    let (_, body) = call_json(&app, Method::GET, &format!("/api/jobs/{}", job.job_id), None).await;
    assert_eq!(body["state"], "done");

    let (_, body) = call_json(&app, Method::GET, "/api/session", None).await;
    let summary: SessionSummary = serde_json::from_value(body).unwrap();
    assert_eq!(summary.round, old_round + 1);
    assert_eq!(summary.cumulative_toa_seconds, 2520.0);
    assert!(summary.active_job.is_none());
    assert!(!summary.embedding_stale);
}

#[tokio::test]
async fn second_job_conflicts_and_reads_do_not_block() {
    let (state, app) = embedded_app().await;
    let old: EmbeddingPayload =
        serde_json::from_value(call_json(&app, Method::GET, "/api/embedding", None).await.1).unwrap();

    state
        .mutate(|s| {
            s.tsne = small_tsne(2_000_000);
            Ok(())
        })
        .unwrap();
    let (status, body) = call_json(&app, Method::POST, "/api/round", Some(json!({}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let running: JobStatus = serde_json::from_value(body).unwrap();
    let before = fingerprint(&app).await;

    let (status, body) = call_json(&app, Method::POST, "/api/round", Some(json!({ "toa_seconds": 5.0 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["job_id"], running.job_id);
    assert_eq!(fingerprint(&app).await, before, "refused round must not record ToA");

    // Previous embedding keeps being served while the job runs.
    let (status, body) = call_json(&app, Method::GET, "/api/embedding", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<EmbeddingPayload>(body).unwrap(), old);
    let (status, _) = call_json(&app, Method::GET, "/api/metrics", None).await;
    assert_eq!(status, StatusCode::OK);

    let (status, _) = call_json(&app, Method::DELETE, &format!("/api/jobs/{}", running.job_id), None).await;
    assert_eq!(status, StatusCode::OK);
    let finished = wait_for(&state, running.job_id).await;
    assert_eq!(finished.state, JobState::Failed);
    assert_eq!(state.snapshot().round, 0);
    assert_eq!(fingerprint(&app).await, before);
}

#[tokio::test]
async fn budget_exhaustion_refuses_round() {
    let mut session = SessionState::new(cluster_dataset(None), None);
    session.tsne = small_tsne(300);
    session.budget_seconds = Some(100.0);
    let (_state, app) = app_with(session, ServerConfig::default());
    let before = fingerprint(&app).await;
    let (status, body) = call_json(&app, Method::POST, "/api/round", Some(json!({ "toa_seconds": 150.0 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "budget_exhausted");
    assert_eq!(fingerprint(&app).await, before);
}

#[tokio::test]
async fn refresh_round_with_bad_manifest_fails_cleanly() {
    let (state, app) = embedded_app().await;
    let before = fingerprint(&app).await;
    let (status, body) = call_json(
        &app,
        Method::POST,
        "/api/round",
        Some(json!({ "manifest_path": "/nonexistent/features.json" })),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(body["kind"], "refresh");
    let job = wait_for(&state, body["job_id"].as_u64().unwrap()).await;
    assert_eq!(job.state, JobState::Failed);
    assert!(job.message.is_some());
    assert_eq!(fingerprint(&app).await, before);
}

#[tokio::test]
async fn refresh_round_swaps_features() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = embedded_app().await;
    let manifest = write_features(&state.snapshot().dataset, dir.path(), "next").unwrap();
    let (_, body) = call_json(
        &app,
        Method::POST,
        "/api/round",
        Some(json!({ "manifest_path": manifest })),
    )
    .await;
    let job = wait_for(&state, body["job_id"].as_u64().unwrap()).await;
    assert_eq!(job.state, JobState::Done, "{:?}", job.message);
    let s = state.snapshot();
    assert_eq!(s.dataset.round, 1);
    assert_eq!(s.manifest_path.as_deref(), Some(manifest.as_path()));
    assert_eq!(s.embedding.as_ref().unwrap().round, 1);
}

#[tokio::test]
async fn metrics_use_labeled_subset() {
    let (state, app) = embedded_app().await;
    let (_, body) = call_json(&app, Method::GET, "/api/metrics", None).await;
    assert!(body["knn_accuracy"].is_null());
    assert!(body["homogeneity"].is_null());

    for (video, class) in [("cluster0", "a"), ("cluster1", "b"), ("cluster2", "c")] {
        let polygon = cluster_polygon(&state, video);
        call_json(
            &app,
            Method::POST,
            "/api/labels",
            Some(json!({ "polygon": polygon, "class_name": class })),
        )
        .await;
    }
    call_json(&app, Method::POST, "/api/toa", Some(json!({ "seconds": 60.0 }))).await;
    let (status, body) = call_json(&app, Method::GET, "/api/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["knn_accuracy"], 1.0);
    assert_eq!(body["homogeneity"], 1.0);
    assert_eq!(body["completeness"], 1.0);
    assert_eq!(body["kmeans_k"], 3);
    assert_eq!(body["cumulative_toa_seconds"], 60.0);
    // 3 videos x 20 clips x 32 frames at 30 fps = 64 s of video per minute of labeling.
    assert_eq!(body["time_gain"], 1);
    assert_eq!(body["per_class_counts"]["b"], 20);
}

#[tokio::test]
async fn export_matches_core() {
    let (state, app) = embedded_app().await;
    let polygon = cluster_polygon(&state, "cluster2");
    call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "polygon": polygon, "class_name": "zumba" })),
    )
    .await;
    let (status, bytes) = call(&app, Method::GET, "/api/export", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        String::from_utf8(bytes).unwrap(),
        state.snapshot().export_json().unwrap()
    );
    let parsed: Value = serde_json::from_str(&state.snapshot().export_json().unwrap()).unwrap();
    assert_eq!(parsed["videos"]["cluster2"][0]["label"], "zumba");
}

#[tokio::test]
async fn thumbnails_served_from_refs() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = SessionState::new(cluster_dataset(Some(dir.path())), None);
    session.tsne = small_tsne(300);
    let (state, app) = app_with(session, ServerConfig::default());
    let job = state.start_job(JobRequest::Embed, |_| Ok(())).unwrap();
    wait_for(&state, job.job_id).await;

    let (_, body) = call_json(&app, Method::GET, "/api/embedding", None).await;
    let url = body["points"][3]["thumbnail_url"].as_str().unwrap().to_string();
    assert_eq!(url, "/thumbs/cluster0%233");
    let (status, bytes) = call(&app, Method::GET, &url, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"png-0-3");

    let (status, _) = call(&app, Method::GET, "/thumbs/ghost%230", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/thumbs/no-index", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn mutations_persist_to_session_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.json");
    let dataset = cluster_dataset(None);
    let manifest = write_features(&dataset, dir.path(), "features").unwrap();
    let mut session = SessionState::new(dataset, Some(manifest));
    session.tsne = small_tsne(300);
    let (state, app) = app_with(
        session,
        ServerConfig {
            session_path: Some(path.clone()),
            metrics_seed: 0,
        },
    );
    let ids: Vec<ClipId> = state.snapshot().dataset.clips()[..2]
        .iter()
        .map(|c| c.clip_id.clone())
        .collect();
    let (status, _) = call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "clip_ids": ids, "class_name": "x" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, batch) = call_json(
        &app,
        Method::POST,
        "/api/batch",
        Some(json!({ "n_videos": 2, "seed": 1 })),
    )
    .await;
    assert_eq!(batch["video_ids"].as_array().unwrap().len(), 2);

    let loaded = SessionState::load(&path).unwrap();
    assert_eq!(&loaded, &*state.snapshot());
    assert_eq!(loaded.labels().current_class(&ids[1]), Some("x"));
}

#[tokio::test]
async fn unsaved_session_refuses_mutation_when_persisting() {
    let dir = tempfile::tempdir().unwrap();
    let (state, app) = app_with(
        SessionState::new(cluster_dataset(None), None),
        ServerConfig {
            session_path: Some(dir.path().join("session.json")),
            metrics_seed: 0,
        },
    );
    let before = fingerprint(&app).await;
    let id = state.snapshot().dataset.clips()[0].clip_id.clone();
    let (status, _) = call_json(
        &app,
        Method::POST,
        "/api/labels",
        Some(json!({ "clip_ids": [id], "class_name": "x" })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(fingerprint(&app).await, before);
}

#[tokio::test]
async fn unknown_job_is_not_found() {
    let (_state, app) = fresh_app();
    let (status, body) = call_json(&app, Method::GET, "/api/jobs/999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
}
