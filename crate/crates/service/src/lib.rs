//! Stateless JSON-over-HTTP API for the analysis-success engine.
//!
//! | method | path            | body                                   |
//! |--------|-----------------|----------------------------------------|
//! | POST   | `/api/evaluate` | scenario                               |
//! | POST   | `/api/correct`  | scenario with a `correction` block     |
//! | POST   | `/api/sweep`    | `{ "scenario", "parameter", "grid" }`  |
//! | GET    | `/api/catalog`  |                                        |
//!
//! Every response object carries an `errors` array, empty on success.
//! Validation problems answer 422 with one `{path, message}` entry per
//! problem; anything else answers 500 with an opaque `id` that is also
//! logged.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use analysis_success::engine::{run_correct, run_evaluate, run_sweep, SweepParam};
use analysis_success::scenario::{parse_scenario_value, SCHEMA_VERSION};
use analysis_success::{Error, Issue, PrincipleCatalog, Scenario};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub const MAX_BODY_BYTES: usize = 1024 * 1024;
pub const MAX_REPLICATES: u64 = 1_000_000;
pub const PORT_ENV: &str = "ANALYSIS_SUCCESS_PORT";
pub const DEFAULT_PORT: u16 = 8080;

/// Catalog schema published alongside the scenario schema.
pub const CATALOG_SCHEMA: &str = include_str!("../../core/schema/catalog.schema.json");

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Threads available to Monte Carlo across all requests.
    pub workers: usize,
    /// The one origin allowed cross-origin access (the planner UI).
    pub ui_origin: Option<HeaderValue>,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    pub max_replicates: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            ui_origin: None,
            static_dir: None,
            max_replicates: MAX_REPLICATES,
        }
    }
}

struct AppState {
    pool: rayon::ThreadPool,
    max_replicates: u64,
}

pub fn router(config: ServiceConfig) -> std::io::Result<Router> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .thread_name(|i| format!("engine-{i}"))
        .build()
        .map_err(std::io::Error::other)?;
    let state = Arc::new(AppState {
        pool,
        max_replicates: config.max_replicates,
    });

    let mut app = Router::new()
        .route("/api/evaluate", post(evaluate))
        .route("/api/correct", post(correct))
        .route("/api/sweep", post(sweep))
        .route("/api/catalog", get(catalog))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    if let Some(origin) = config.ui_origin {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list([origin]))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    if let Some(dir) = config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    Ok(app)
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let app = router(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// A response body with the trailing `errors` array.
#[derive(Serialize)]
struct WithErrors<T> {
    #[serde(flatten)]
    body: T,
    errors: Vec<Issue>,
}

#[derive(Serialize)]
struct ErrorBody {
    errors: Vec<Issue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

enum ApiError {
    Invalid(Vec<Issue>),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            ApiError::Invalid(e.issues())
        } else {
            ApiError::Internal(e.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::Invalid(errors) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(ErrorBody { errors, id: None }),
            )
                .into_response(),
            ApiError::Internal(detail) => {
                let id = uuid::Uuid::new_v4().to_string();
                tracing::error!(%id, "{detail}");
                let errors = vec![Issue::new("", "internal error")];
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    Json(ErrorBody {
                        errors,
                        id: Some(id),
                    }),
                )
                    .into_response()
            }
        }
    }
}

fn ok<T: Serialize>(body: T) -> Response {
    Json(WithErrors {
        body,
        errors: Vec::new(),
    })
    .into_response()
}

fn json_body(body: &Bytes) -> Result<serde_json::Value, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::Invalid(vec![Issue::new("", format!("malformed JSON body: {e}"))]))
}

fn scenario(
    value: serde_json::Value,
    state: &AppState,
    prefix: &str,
) -> Result<Scenario, ApiError> {
    let s = parse_scenario_value(value).map_err(|e| match ApiError::from(e) {
        ApiError::Invalid(issues) => ApiError::Invalid(
            issues
                .into_iter()
                .map(|i| Issue::new(join(prefix, &i.path), i.message))
                .collect(),
        ),
        other => other,
    })?;
    if s.mc.replicates > state.max_replicates {
        return Err(ApiError::Invalid(vec![Issue::new(
            join(prefix, "mc.replicates"),
            format!(
                "at most {} replicates per request, got {}",
                state.max_replicates, s.mc.replicates
            ),
        )]));
    }
    Ok(s)
}

fn join(prefix: &str, path: &str) -> String {
    match (prefix.is_empty(), path.is_empty()) {
        (true, _) => path.to_string(),
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}.{path}"),
    }
}

/// Runs `job` on the engine pool without blocking the async runtime.
async fn compute<T, F>(state: Arc<AppState>, job: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> analysis_success::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || state.pool.install(job))
        .await
        .map_err(|e| ApiError::Internal(format!("engine task failed: {e}")))?
        .map_err(ApiError::from)
}

async fn evaluate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let s = scenario(json_body(&body)?, &state, "")?;
    let report = compute(state, move || run_evaluate(&s)).await?;
    Ok(ok(report))
}

async fn correct(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let s = scenario(json_body(&body)?, &state, "")?;
    if s.correction.is_none() {
        return Err(ApiError::Invalid(vec![Issue::new(
            "correction",
            "a correction block is required",
        )]));
    }
    let out = compute(state, move || run_correct(&s)).await?;
    Ok(ok(out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRequest {
    scenario: serde_json::Value,
    parameter: String,
    grid: Vec<f64>,
}

async fn sweep(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: SweepRequest = serde_json::from_slice(&body).map_err(|e| {
        ApiError::Invalid(vec![Issue::new(
            "",
            format!("malformed sweep request: {e}"),
        )])
    })?;
    let param: SweepParam = req
        .parameter
        .parse()
        .map_err(|e: Error| ApiError::Invalid(vec![Issue::new("parameter", e.to_string())]))?;
    let s = scenario(req.scenario, &state, "scenario")?;
    let grid = req.grid;
    let table = compute(state, move || run_sweep(&s, param, &grid)).await?;
    Ok(ok(table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogResponse {
    pub principles: Vec<String>,
    pub schema_version: String,
}

async fn catalog() -> Response {
    ok(CatalogResponse {
        principles: PrincipleCatalog::default().names().to_vec(),
        schema_version: SCHEMA_VERSION.to_string(),
    })
}
