//! HTTP routes.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::Value;
use tower_http::cors::CorsLayer;

use crate::error::{from_value, parse_json, OpError};
use crate::jobs::JobQueue;
use crate::ops::{self, OracleRef, OracleSource, Resolver, RewardRequest};
use crate::store::{SceneStore, DEFAULT_PAGE};

pub const CHANNELS_HEADER: &str = "x-cnocs-channels";
pub const VARIANT_HEADER: &str = "x-cnocs-variant";
const BODY_LIMIT: usize = 16 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub data_dir: PathBuf,
    pub store: Arc<SceneStore>,
    pub jobs: JobQueue,
}

impl AppState {
    pub fn open(data_dir: PathBuf, workers: usize) -> Result<Self, OpError> {
        let store = SceneStore::open(&data_dir)?;
        Ok(Self {
            data_dir,
            store: Arc::new(store),
            jobs: JobQueue::new(workers),
        })
    }

    pub fn fixtures_dir(&self) -> PathBuf {
        self.data_dir.join("fixtures")
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/v1/render", post(render))
        .route("/v1/reward", post(reward))
        .route("/v1/sample", post(submit_sample))
        .route("/v1/sample/{id}", get(sample_status))
        .route("/v1/sample/{id}/latent", get(sample_latent))
        .route("/v1/sample/{id}/preview", get(sample_preview))
        .route("/v1/scenes", post(create_scene).get(list_scenes))
        .route("/v1/scenes/{id}", get(get_scene).put(update_scene).delete(delete_scene))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub struct ApiError(pub OpError);

impl From<OpError> for ApiError {
    fn from(e: OpError) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &OpError) -> StatusCode {
    match e {
        OpError::Invalid { .. } => StatusCode::BAD_REQUEST,
        OpError::Degenerate { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        OpError::NotFound(_) => StatusCode::NOT_FOUND,
        OpError::Conflict { .. } | OpError::NotReady(_) => StatusCode::CONFLICT,
        OpError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        json_response(status, &self.0.body())
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_response<T: serde::Serialize>(status: StatusCode, body: &T) -> Response {
    match ops::to_json_bytes(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn blocking<T, F>(f: F) -> Result<T, OpError>
where
    F: FnOnce() -> Result<T, OpError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| OpError::internal(format!("worker task failed: {e}")))?
}

async fn render(body: Bytes) -> ApiResult {
    let artifact = blocking(move || {
        let (scene, options) = ops::parse_render_request(parse_json(&body)?)?;
        ops::render(&scene, &options)
    })
    .await?;
    let mut resp = (StatusCode::OK, artifact.bytes).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(artifact.content_type));
    headers.insert(CHANNELS_HEADER, HeaderValue::from(artifact.channels));
    headers.insert(VARIANT_HEADER, HeaderValue::from_static(artifact.variant));
    Ok(resp)
}

async fn reward(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let fixtures = state.fixtures_dir();
    let bytes = blocking(move || {
        let req: RewardRequest = from_value(parse_json(&body)?, "")?;
        let scene = ops::parse_scene(req.scene, "scene")?;
        let weights = ops::check_weights(req.gamma, req.lambda, req.kappa)?;
        let source = match req.oracle {
            OracleRef::GroundTruth => OracleSource::GroundTruth,
            OracleRef::Fixture { name, case_id } => OracleSource::Fixture {
                oracle: ops::load_fixture(&ops::fixture_path(&fixtures, &name)?)?,
                case_id,
            },
        };
        ops::reward_json(&scene, &source, &weights)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn submit_sample(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let resolver = Resolver {
        base: state.data_dir.clone(),
        confined: true,
    };
    let prepared = blocking(move || ops::prepare_sample(parse_json(&body)?, &resolver)).await?;
    let id = state.jobs.submit(prepared);
    let view = state.jobs.view(&id).ok_or_else(|| OpError::internal("job vanished"))?;
    Ok(json_response(StatusCode::ACCEPTED, &view))
}

fn unknown_run(id: &str) -> ApiError {
    OpError::NotFound(format!("sample run `{id}`")).into()
}

async fn sample_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let view = state.jobs.view(&id).ok_or_else(|| unknown_run(&id))?;
    Ok(json_response(StatusCode::OK, &view))
}

fn sample_artifact(state: &AppState, id: &str, preview: bool) -> ApiResult {
    let output = state
        .jobs
        .output(id)
        .ok_or_else(|| unknown_run(id))?
        .ok_or_else(|| OpError::NotReady(format!("sample run `{id}` has no output")))?;
    let (bytes, ct) = if preview {
        (output.preview.clone(), ops::PNG)
    } else {
        (output.latent.clone(), ops::OCTET_STREAM)
    };
    Ok(([(header::CONTENT_TYPE, ct)], bytes).into_response())
}

async fn sample_latent(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    sample_artifact(&state, &id, false)
}

async fn sample_preview(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    sample_artifact(&state, &id, true)
}

async fn create_scene(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let doc = parse_json(&body)?;
    ops::parse_scene(doc.clone(), "")?;
    let store = state.store.clone();
    let record = blocking(move || store.create(doc)).await?;
    Ok(json_response(StatusCode::CREATED, &record))
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    cursor: Option<String>,
    limit: Option<usize>,
}

async fn list_scenes(State(state): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult {
    let page = state.store.list(q.cursor.as_deref(), q.limit.unwrap_or(DEFAULT_PAGE));
    Ok(json_response(StatusCode::OK, &page))
}

async fn get_scene(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(json_response(StatusCode::OK, &state.store.get(&id)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateBody {
    revision: u64,
    scene: Value,
}

async fn update_scene(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: UpdateBody = from_value(parse_json(&body)?, "")?;
    ops::parse_scene(req.scene.clone(), "scene")?;
    let store = state.store.clone();
    let record = blocking(move || store.update(&id, req.revision, req.scene)).await?;
    Ok(json_response(StatusCode::OK, &record))
}

async fn delete_scene(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let store = state.store.clone();
    blocking(move || store.delete(&id)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: AppState, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %state.data_dir.display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
