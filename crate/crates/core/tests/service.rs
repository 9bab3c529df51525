//! HTTP API tests against a project built from the bundled synthetic fixture.

mod common;

use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use cipher_core::annotate::{self, ClusterKey};
use cipher_core::config::PipelineConfig;
use cipher_core::ingest::WindowId;
use cipher_core::project::{Project, LABELS_FILE};
use cipher_core::service::{router, AppState, ClusterList, SummaryResponse};

fn built_project() -> (TempDir, Project) {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    let config = PipelineConfig::load(&config_path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let project = Project::new(dir.path());
    project.run(&config).unwrap();
    (dir, project)
}

fn app(project: &Project) -> Router {
    router(AppState::open(project), None)
}

async fn send(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => request.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, bytes) = send(app, Method::GET, uri, None).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = send(app, Method::POST, uri, Some(body)).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn members(project: &Project, cluster: u32) -> Vec<WindowId> {
    project
        .assignments()
        .unwrap()
        .into_iter()
        .filter(|a| a.cluster == Some(cluster))
        .map(|a| a.window_id)
        .collect()
}

fn label_body(label: &str, reviewed: &[WindowId]) -> Value {
    json!({ "label": label, "annotator": "tester", "reviewed": reviewed })
}

#[tokio::test]
async fn project_and_cluster_listing() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let (status, info) = get(&app, "/api/project").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(info["schema_version"], 1);
    assert_eq!(info["channels"].as_array().unwrap().len(), 2);
    assert_eq!(info["window_length"], 128);

    let (status, body) = get(&app, "/api/clusters").await;
    assert_eq!(status, StatusCode::OK);
    let list: ClusterList = serde_json::from_value(body).unwrap();
    let sizes: usize = list.clusters.iter().map(|c| c.size).sum();
    assert_eq!(sizes, project.assignments().unwrap().len());
    assert!(
        list.clusters
            .iter()
            .filter(|c| c.id != ClusterKey::Noise)
            .count()
            >= 2
    );
    assert!(list
        .clusters
        .iter()
        .all(|c| c.label.is_none() && c.revision == 0));
}

#[tokio::test]
async fn error_statuses() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let (status, body) = get(&app, "/api/clusters/999/summary").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_cluster");
    assert_eq!(
        get(&app, "/api/clusters/999/representatives").await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        get(&app, "/api/clusters/abc/summary").await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        get(&app, "/api/clusters/0/representatives?n=many").await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        get(&app, "/api/clusters/0/representatives?n=0").await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(get(&app, "/api/nothing").await.0, StatusCode::NOT_FOUND);

    let ids = members(&project, 0);
    let (status, _) = post(
        &app,
        "/api/clusters/0/label",
        label_body("storm", &ids[..1]),
    )
    .await;
    assert_eq!(
        status,
        StatusCode::BAD_REQUEST,
        "label outside the taxonomy"
    );
    let (status, _) = post(&app, "/api/clusters/0/label", label_body("CME", &[])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "nothing reviewed");
    let outsider = members(&project, 1)[0];
    let (status, _) = post(
        &app,
        "/api/clusters/0/label",
        label_body("CME", &[outsider]),
    )
    .await;
    assert_eq!(
        status,
        StatusCode::BAD_REQUEST,
        "reviewed window outside the cluster"
    );
    let (status, _) = post(
        &app,
        "/api/clusters/noise/label",
        label_body("CME", &ids[..1]),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(
        &app,
        "/api/clusters/999/label",
        label_body("CME", &ids[..1]),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, bytes) = send(
        &app,
        Method::POST,
        "/api/clusters/0/label",
        Some(json!({"label": 3})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8(bytes)
        .unwrap()
        .contains("invalid label body"));
    assert!(project.journal().unwrap().records().is_empty());
}

#[tokio::test]
async fn unbuilt_project_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&Project::new(dir.path()));
    for uri in [
        "/api/project",
        "/api/clusters",
        "/api/progress",
        "/api/clusters/0/summary",
    ] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(body["error"], "unavailable");
    }
}

#[tokio::test]
async fn single_representative_is_the_medoid() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let pre = project.preprocessed().unwrap();
    for cluster in [0u32, 1] {
        let ids = members(&project, cluster);
        // concatenated clustering channels, brute-force summed distances
        let vectors: Vec<Vec<f64>> = ids
            .iter()
            .map(|id| {
                let w = pre.windows.iter().find(|w| w.id == *id).unwrap();
                w.channels.values().flat_map(|p| p.values.clone()).collect()
            })
            .collect();
        let totals: Vec<f64> = vectors
            .iter()
            .map(|v| vectors.iter().map(|u| common::euclidean(v, u)).sum())
            .collect();
        let best = (0..ids.len())
            .min_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(ids[a].cmp(&ids[b])))
            .unwrap();
        let (status, body) = get(
            &app,
            &format!("/api/clusters/{cluster}/representatives?n=1"),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let reps = body["representatives"].as_array().unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0]["window_id"], ids[best].0);
    }
}

#[tokio::test]
async fn representatives_are_seeded_and_complete() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let uri = "/api/clusters/0/representatives?n=5&seed=11";
    let (s1, first) = send(&app, Method::GET, uri, None).await;
    let (s2, second) = send(&app, Method::GET, uri, None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);

    let body: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(body["seed"], 11);
    let reps = body["representatives"].as_array().unwrap();
    assert_eq!(reps.len(), 5);
    let ids: Vec<u64> = reps
        .iter()
        .map(|r| r["window_id"].as_u64().unwrap())
        .collect();
    let unique: std::collections::BTreeSet<_> = ids.iter().collect();
    assert_eq!(unique.len(), 5);
    for r in reps {
        let channels = r["channels"].as_array().unwrap();
        assert_eq!(channels.len(), 2, "one panel per channel");
        for c in channels {
            assert_eq!(c["raw"].as_array().unwrap().len(), 128);
            assert_eq!(c["preprocessed"].as_array().unwrap().len(), 128);
        }
        assert_eq!(r["cluster"], 0);
        assert!(r["words"]["density"].is_string());
    }

    // the configured defaults apply without a query
    let (status, body) = get(&app, "/api/clusters/0/representatives").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["seed"], 7);
    assert_eq!(body["representatives"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn summary_matches_direct_computation() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let pre = project.preprocessed().unwrap();
    let ids = members(&project, 1);
    let (status, bytes) = send(&app, Method::GET, "/api/clusters/1/summary", None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, again) = send(&app, Method::GET, "/api/clusters/1/summary", None).await;
    assert_eq!(bytes, again, "repeated reads are byte-identical");

    let response: SummaryResponse = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(response.summary.size, ids.len());
    for channel in ["density", "speed"] {
        let vectors: Vec<Vec<f64>> = ids
            .iter()
            .map(|id| {
                pre.windows.iter().find(|w| w.id == *id).unwrap().channels[channel]
                    .values
                    .clone()
            })
            .collect();
        let direct = annotate::summarize(&vectors).unwrap();
        assert_eq!(
            serde_json::to_string(&response.summary.curves[channel]).unwrap(),
            serde_json::to_string(&direct).unwrap()
        );
    }
    let histogram_total: usize = response.summary.word_histogram["density"].values().sum();
    assert_eq!(histogram_total, ids.len());
}

#[tokio::test]
async fn later_label_wins_and_both_are_journaled() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let ids = members(&project, 0);
    let (s1, first) = post(&app, "/api/clusters/0/label", label_body("CME", &ids[..2])).await;
    let (s2, second) = post(&app, "/api/clusters/0/label", label_body("SIR", &ids[..1])).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first["record"]["revision"], 1);
    assert_eq!(second["record"]["revision"], 2);

    let lines = std::fs::read_to_string(project.path(LABELS_FILE)).unwrap();
    assert_eq!(lines.lines().count(), 2);
    let replayed = project.journal().unwrap();
    assert_eq!(replayed.effective()[&0].label, "SIR");

    let (_, list) = get(&app, "/api/clusters").await;
    let list: ClusterList = serde_json::from_value(list).unwrap();
    let entry = list
        .clusters
        .iter()
        .find(|c| c.id == ClusterKey::Cluster(0))
        .unwrap();
    assert_eq!((entry.label.as_deref(), entry.revision), (Some("SIR"), 2));
}

#[tokio::test]
async fn concurrent_submissions_are_serialized() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let ids = members(&project, 0);
    let a = post(&app, "/api/clusters/0/label", label_body("CME", &ids[..1]));
    let b = post(&app, "/api/clusters/0/label", label_body("SIR", &ids[..1]));
    let ((sa, ra), (sb, rb)) = tokio::join!(a, b);
    assert_eq!((sa, sb), (StatusCode::OK, StatusCode::OK));
    let mut revisions = [
        ra["record"]["revision"].as_u64(),
        rb["record"]["revision"].as_u64(),
    ];
    revisions.sort();
    assert_eq!(revisions, [Some(1), Some(2)]);
    let journal = project.journal().unwrap();
    assert_eq!(journal.records().len(), 2);
    let last = journal.records().last().unwrap();
    assert_eq!(journal.effective()[&0].label, last.label);
}

#[tokio::test]
async fn stale_revision_conflicts() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let ids = members(&project, 0);
    let mut body = label_body("CME", &ids[..1]);
    body["expected_revision"] = json!(0);
    assert_eq!(
        post(&app, "/api/clusters/0/label", body.clone()).await.0,
        StatusCode::OK
    );
    let (status, err) = post(&app, "/api/clusters/0/label", body.clone()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "conflict");
    // retry against the current revision succeeds
    body["expected_revision"] = json!(1);
    body["label"] = json!("SIR");
    let (status, ok) = post(&app, "/api/clusters/0/label", body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ok["record"]["revision"], 2);
    assert_eq!(project.journal().unwrap().records().len(), 2);
}

#[tokio::test]
async fn progress_tracks_store_counts() {
    let (_dir, project) = built_project();
    let app = app(&project);
    let assignments = project.assignments().unwrap();
    let clusters: std::collections::BTreeSet<u32> =
        assignments.iter().filter_map(|a| a.cluster).collect();

    let (status, p) = get(&app, "/api/progress").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["clusters_total"], clusters.len());
    assert_eq!(p["windows_total"], assignments.len());
    assert_eq!(p["windows_total"], project.windows().unwrap().windows.len());
    assert_eq!(
        (
            p["clusters_labeled"].as_u64(),
            p["windows_labeled"].as_u64()
        ),
        (Some(0), Some(0))
    );

    let ids = members(&project, 0);
    post(&app, "/api/clusters/0/label", label_body("CME", &ids[..1])).await;
    let (_, p) = get(&app, "/api/progress").await;
    assert_eq!(p["clusters_labeled"], 1);
    assert_eq!(p["windows_labeled"], ids.len());
}

#[tokio::test]
async fn serves_static_assets() {
    let (_dir, project) = built_project();
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(AppState::open(&project), Some(assets.path().to_path_buf()));
    let (status, body) = send(&app, Method::GET, "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>ui</html>");
    assert_eq!(get(&app, "/api/project").await.0, StatusCode::OK);
}
