//! JSON-over-HTTP view of a finished project for the labeling UI. Reads are
//! pure views of the stores loaded at startup; the only write is appending
//! to the label journal, serialized behind one mutex.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::annotate::{ClusterKey, ClusterSummary, LabelDraft, LabelJournal, LabelRecord};
use crate::error::Error;
use crate::project::{
    ClusterEntry, Progress, Project, ProjectData, RepresentativeView, SCHEMA_VERSION,
};

/// Shared state behind every handler.
pub struct AppState {
    data: std::result::Result<ProjectData, String>,
    journal: Mutex<std::result::Result<LabelJournal, String>>,
}

impl AppState {
    /// Loads the project's stores. Failures are kept and reported as 503 by
    /// every API endpoint, so the process still starts and can explain itself.
    pub fn open(project: &Project) -> Self {
        let data = ProjectData::load(project).map_err(|e| e.to_string());
        let journal = project.journal().map_err(|e| e.to_string());
        if let Err(e) = &data {
            log::warn!("project not ready: {e}");
        }
        Self {
            data,
            journal: Mutex::new(journal),
        }
    }
}

type Shared = Arc<AppState>;

#[derive(Debug, Serialize)]
struct ErrorBody {
    schema_version: u32,
    error: String,
    message: String,
}

/// Error response with a JSON body.
pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    fn unavailable(message: &str) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid", message)
    }

    fn not_found(key: ClusterKey) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_cluster",
            format!("unknown cluster {key}"),
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownCluster(_) => StatusCode::NOT_FOUND,
            Error::Invalid(_) | Error::Parse { .. } | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::Conflict { .. } => StatusCode::CONFLICT,
            Error::MissingArtifact { .. } | Error::Store { .. } => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: self.kind,
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn data(state: &AppState) -> std::result::Result<&ProjectData, ApiError> {
    state.data.as_ref().map_err(|e| ApiError::unavailable(e))
}

fn cluster_key(raw: &str) -> std::result::Result<ClusterKey, ApiError> {
    raw.parse()
        .map_err(|e: Error| ApiError::bad_request(e.to_string()))
}

fn with_journal<T>(
    state: &AppState,
    f: impl FnOnce(&mut LabelJournal) -> std::result::Result<T, ApiError>,
) -> std::result::Result<T, ApiError> {
    let mut guard = state.journal.lock().unwrap_or_else(|p| p.into_inner());
    match guard.as_mut() {
        Ok(journal) => f(journal),
        Err(e) => Err(ApiError::unavailable(e)),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectInfo {
    pub schema_version: u32,
    pub channels: Vec<ChannelInfo>,
    pub cluster_channels: Vec<String>,
    pub taxonomy: Vec<String>,
    pub cadence_secs: u32,
    pub window_length: usize,
    pub representatives: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub unit: String,
}

async fn project_info(State(state): State<Shared>) -> ApiResult<ProjectInfo> {
    let d = data(&state)?;
    let c = &d.config;
    Ok(Json(ProjectInfo {
        schema_version: SCHEMA_VERSION,
        channels: c
            .dataset
            .channels
            .iter()
            .map(|ch| ChannelInfo {
                name: ch.name.clone(),
                unit: ch.unit.clone(),
            })
            .collect(),
        cluster_channels: c
            .cluster_channels()
            .iter()
            .map(|ch| ch.name.clone())
            .collect(),
        taxonomy: c.annotate.taxonomy.clone(),
        cadence_secs: d.windows.cadence_secs,
        window_length: d.windows.windows.first().map_or(0, |w| w.length),
        representatives: c.annotate.representatives,
        seed: c.annotate.seed,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterList {
    pub schema_version: u32,
    pub clusters: Vec<ClusterEntry>,
}

async fn list_clusters(State(state): State<Shared>) -> ApiResult<ClusterList> {
    let d = data(&state)?;
    let clusters = with_journal(&state, |j| Ok(d.clusters(j)))?;
    Ok(Json(ClusterList {
        schema_version: SCHEMA_VERSION,
        clusters,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryResponse {
    pub schema_version: u32,
    #[serde(flatten)]
    pub summary: ClusterSummary,
}

async fn cluster_summary(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<SummaryResponse> {
    let d = data(&state)?;
    let key = cluster_key(&id)?;
    let summary = d.summary(key).ok_or_else(|| ApiError::not_found(key))?;
    Ok(Json(SummaryResponse {
        schema_version: SCHEMA_VERSION,
        summary: summary.clone(),
    }))
}

#[derive(Debug, Deserialize)]
struct RepresentativeQuery {
    n: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RepresentativeList {
    pub schema_version: u32,
    pub cluster: ClusterKey,
    pub seed: u64,
    pub representatives: Vec<RepresentativeView>,
}

async fn cluster_representatives(
    State(state): State<Shared>,
    Path(id): Path<String>,
    query: std::result::Result<Query<RepresentativeQuery>, QueryRejection>,
) -> ApiResult<RepresentativeList> {
    let d = data(&state)?;
    let key = cluster_key(&id)?;
    if !d.has_cluster(key) {
        return Err(ApiError::not_found(key));
    }
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let n = q.n.unwrap_or(d.config.annotate.representatives);
    let seed = q.seed.unwrap_or(d.config.annotate.seed);
    let representatives = d.representatives(key, n, seed)?;
    Ok(Json(RepresentativeList {
        schema_version: SCHEMA_VERSION,
        cluster: key,
        seed,
        representatives,
    }))
}

/// Body of a label submission. `expected_revision`, when present, makes the
/// write conditional on the cluster's journal revision (409 otherwise).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub label: String,
    pub annotator: String,
    pub reviewed: Vec<crate::ingest::WindowId>,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelResponse {
    pub schema_version: u32,
    pub record: LabelRecord,
}

async fn submit_label(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<LabelResponse> {
    let d = data(&state)?;
    let key = cluster_key(&id)?;
    let cluster = match key {
        ClusterKey::Noise => return Err(ApiError::bad_request("noise cannot be labeled")),
        ClusterKey::Cluster(c) => c,
    };
    let membership = d.membership();
    if !membership.contains_key(&cluster) {
        return Err(ApiError::not_found(key));
    }
    let request: LabelRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid label body: {e}")))?;
    let draft = LabelDraft {
        label: request.label,
        annotator: request.annotator,
        reviewed: request.reviewed,
        note: request.note,
    };
    let record = with_journal(&state, |j| {
        j.assign(
            cluster,
            draft,
            &membership,
            &d.config.annotate.taxonomy,
            request.expected_revision,
            chrono::Utc::now(),
        )
        .map_err(ApiError::from)
    })?;
    log::info!(
        "cluster {cluster} labeled {:?} (revision {})",
        record.label,
        record.revision
    );
    Ok(Json(LabelResponse {
        schema_version: SCHEMA_VERSION,
        record,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProgressResponse {
    pub schema_version: u32,
    #[serde(flatten)]
    pub progress: Progress,
}

async fn progress(State(state): State<Shared>) -> ApiResult<ProgressResponse> {
    let d = data(&state)?;
    let progress = with_journal(&state, |j| Ok(d.progress(j)))?;
    Ok(Json(ProgressResponse {
        schema_version: SCHEMA_VERSION,
        progress,
    }))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The API router, with static UI assets from `static_dir` when given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/project", get(project_info))
        .route("/clusters", get(list_clusters))
        .route("/clusters/{id}/summary", get(cluster_summary))
        .route(
            "/clusters/{id}/representatives",
            get(cluster_representatives),
        )
        .route("/clusters/{id}/label", post(submit_label))
        .route("/progress", get(progress))
        .fallback(api_not_found);
    let mut app = Router::new().nest("/api", api).with_state(Arc::new(state));
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(CorsLayer::permissive())
}

/// Serves `project` on `addr` until interrupted.
pub async fn serve(
    project: Project,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
) -> crate::Result<()> {
    let state = AppState::open(&project);
    let app = router(state, static_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving {} on http://{}",
        project.root().display(),
        listener.local_addr()?
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
