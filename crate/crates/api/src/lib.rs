//! HTTP surface of the workbench. Every route delegates to one core
//! operation and serializes its result unchanged.

mod error;

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, Method, Uri};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio_stream::wrappers::UnboundedReceiverStream;
use tokio_stream::StreamExt;

use darkit_core::flow::FlowGraph;
use darkit_core::forge::{CommandRequest, SearchSpace};
use darkit_core::registry::{EntryKey, EntryKind, RegistryEntry};
use darkit_core::tracker::{ExportFormat, RunFilter, RunStatus, SynthSpec, DEFAULT_MAX_POINTS};
use darkit_core::workbench::{self, module_id_from_path, PatchRequest, Workbench, WorkbenchError};

pub use error::{ApiError, ErrorBody, ErrorDocument};

/// Silence after which the live feed sends a comment line.
pub const HEARTBEAT: Duration = Duration::from_secs(15);

type AppState = Arc<Workbench>;
type ApiResult<T> = Result<Json<T>, ApiError>;

/// `POST /api/registry` body: a manifest plus base64-encoded payload files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadRequest {
    pub manifest: RegistryEntry,
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

impl UploadRequest {
    pub fn new(manifest: RegistryEntry, files: &BTreeMap<String, Vec<u8>>) -> Self {
        let engine = base64::engine::general_purpose::STANDARD;
        Self {
            manifest,
            files: files
                .iter()
                .map(|(path, bytes)| (path.clone(), engine.encode(bytes)))
                .collect(),
        }
    }

    pub fn decode_files(&self) -> Result<BTreeMap<String, Vec<u8>>, String> {
        let engine = base64::engine::general_purpose::STANDARD;
        self.files
            .iter()
            .map(|(path, text)| {
                engine
                    .decode(text)
                    .map(|bytes| (path.clone(), bytes))
                    .map_err(|e| format!("file `{path}` is not valid base64: {e}"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRunRequest {
    pub model: String,
    #[serde(default)]
    pub config: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

#[derive(Debug, Deserialize)]
struct KindQuery {
    kind: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RunsQuery {
    model: Option<String>,
    status: Option<String>,
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    name: Option<String>,
    max_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct CompareQuery {
    ids: Option<String>,
    name: Option<String>,
    max_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(t)| t)
        .map_err(|e| ApiError::bad_request(format!("malformed query: {}", e.body_text())))
}

fn path<T>(p: Result<Path<T>, PathRejection>) -> Result<T, ApiError> {
    p.map(|Path(t)| t)
        .map_err(|e| ApiError::bad_request(format!("malformed path: {}", e.body_text())))
}

/// Runs a blocking workbench call off the async executor.
async fn with_workbench<T, F>(state: AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Workbench) -> Result<T, WorkbenchError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map(Json)
        .map_err(ApiError::from)
}

fn entry_key(kind: &str, name: String, version: String) -> Result<EntryKey, ApiError> {
    let kind: EntryKind = kind.parse().map_err(|e: darkit_core::registry::RegistryError| ApiError::bad_request(e.to_string()))?;
    Ok(EntryKey { kind, name, version })
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

async fn list_registry(
    State(wb): State<AppState>,
    q: Result<Query<KindQuery>, QueryRejection>,
) -> ApiResult<Vec<RegistryEntry>> {
    let kind = match query(q)?.kind {
        Some(k) => Some(k.parse::<EntryKind>().map_err(|e| ApiError::bad_request(e.to_string()))?),
        None => None,
    };
    Ok(Json(wb.registry().list_entries(kind)))
}

async fn add_registry(State(wb): State<AppState>, body: Bytes) -> ApiResult<RegistryEntry> {
    let upload: UploadRequest = parse_body(&body)?;
    let files = upload.decode_files().map_err(ApiError::bad_request)?;
    with_workbench(wb, move |wb| Ok(wb.registry().add_entry(upload.manifest, &files)?)).await
}

async fn verify_registry(
    State(wb): State<AppState>,
    p: Result<Path<(String, String, String)>, PathRejection>,
) -> ApiResult<darkit_core::registry::VerifyReport> {
    let (kind, name, version) = path(p)?;
    let key = entry_key(&kind, name, version)?;
    with_workbench(wb, move |wb| Ok(wb.registry().verify_entry(&key)?)).await
}

async fn remove_registry(
    State(wb): State<AppState>,
    p: Result<Path<(String, String, String)>, PathRejection>,
) -> ApiResult<RegistryEntry> {
    let (kind, name, version) = path(p)?;
    let key = entry_key(&kind, name, version)?;
    with_workbench(wb, move |wb| Ok(wb.registry().remove_entry(&key)?)).await
}

async fn model_tree(
    State(wb): State<AppState>,
    p: Result<Path<String>, PathRejection>,
) -> ApiResult<darkit_core::extract::DisplayTree> {
    let name = path(p)?;
    with_workbench(wb, move |wb| wb.model_tree(&name)).await
}

async fn module_code(
    State(wb): State<AppState>,
    p: Result<Path<(String, String)>, PathRejection>,
) -> ApiResult<darkit_core::extract::CodeSegment> {
    let (name, id) = path(p)?;
    with_workbench(wb, move |wb| wb.module_code(&name, module_id_from_path(&id))).await
}

async fn validate_patch(
    State(wb): State<AppState>,
    p: Result<Path<(String, String)>, PathRejection>,
    body: Bytes,
) -> ApiResult<darkit_core::patch::ValidationReport> {
    let (name, id) = path(p)?;
    let req: PatchRequest = parse_body(&body)?;
    with_workbench(wb, move |wb| wb.validate_patch(&name, module_id_from_path(&id), &req)).await
}

async fn apply_patch(
    State(wb): State<AppState>,
    p: Result<Path<(String, String)>, PathRejection>,
    body: Bytes,
) -> ApiResult<workbench::PatchOutcome> {
    let (name, id) = path(p)?;
    let req: PatchRequest = parse_body(&body)?;
    with_workbench(wb, move |wb| wb.apply_patch(&name, module_id_from_path(&id), &req)).await
}

async fn patch_history(
    State(wb): State<AppState>,
    p: Result<Path<String>, PathRejection>,
) -> ApiResult<Vec<darkit_core::patch::PatchRecord>> {
    let name = path(p)?;
    with_workbench(wb, move |wb| wb.patch_history(&name)).await
}

async fn flow_validate(body: Bytes) -> ApiResult<workbench::FlowReport> {
    let graph: FlowGraph = parse_body(&body)?;
    Ok(Json(workbench::flow_validate(&graph)))
}

async fn flow_shapes(body: Bytes) -> ApiResult<workbench::ShapesReport> {
    let graph: FlowGraph = parse_body(&body)?;
    Ok(Json(workbench::flow_shapes(&graph)?))
}

async fn flow_compile(body: Bytes) -> ApiResult<workbench::CompiledSource> {
    let graph: FlowGraph = parse_body(&body)?;
    Ok(Json(workbench::flow_compile(&graph)?))
}

async fn render_command(State(wb): State<AppState>, body: Bytes) -> ApiResult<workbench::RenderedCommand> {
    let req: CommandRequest = parse_body(&body)?;
    with_workbench(wb, move |wb| wb.render_command(&req)).await
}

async fn expand_grid(State(wb): State<AppState>, body: Bytes) -> ApiResult<workbench::CommandGrid> {
    let space: SearchSpace = parse_body(&body)?;
    with_workbench(wb, move |wb| wb.expand_grid(&space)).await
}

async fn run_command(State(wb): State<AppState>, body: Bytes) -> ApiResult<darkit_core::tracker::RunRecord> {
    let req: CommandRequest = parse_body(&body)?;
    with_workbench(wb, move |wb| wb.train(&req)).await
}

async fn create_run(State(wb): State<AppState>, body: Bytes) -> ApiResult<darkit_core::tracker::RunRecord> {
    let req: CreateRunRequest = parse_body(&body)?;
    with_workbench(wb, move |wb| Ok(wb.tracker().create_run(&req.model, req.config)?)).await
}

async fn simulate_run(State(wb): State<AppState>, body: Bytes) -> ApiResult<darkit_core::tracker::RunRecord> {
    let spec: SynthSpec = parse_body(&body)?;
    with_workbench(wb, move |wb| Ok(wb.tracker().synth_run(&spec)?)).await
}

async fn import_run(State(wb): State<AppState>, body: Bytes) -> ApiResult<darkit_core::tracker::RunRecord> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    with_workbench(wb, move |wb| Ok(wb.tracker().import_run(&text)?)).await
}

async fn ingest(
    State(wb): State<AppState>,
    p: Result<Path<String>, PathRejection>,
    body: Bytes,
) -> ApiResult<darkit_core::tracker::IngestReport> {
    let id = path(p)?;
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    with_workbench(wb, move |wb| Ok(wb.tracker().ingest_events(&id, &text)?)).await
}

async fn list_runs(
    State(wb): State<AppState>,
    q: Result<Query<RunsQuery>, QueryRejection>,
) -> ApiResult<Vec<darkit_core::tracker::RunRecord>> {
    let q = query(q)?;
    let status = match q.status {
        Some(s) => Some(s.parse::<RunStatus>().map_err(ApiError::bad_request)?),
        None => None,
    };
    let filter = RunFilter { model: q.model, status };
    Ok(Json(wb.tracker().list_runs(&filter)))
}

async fn run_detail(
    State(wb): State<AppState>,
    p: Result<Path<String>, PathRejection>,
) -> ApiResult<darkit_core::tracker::RunDetail> {
    let id = path(p)?;
    with_workbench(wb, move |wb| Ok(wb.tracker().run_detail(&id)?)).await
}

async fn metrics(
    State(wb): State<AppState>,
    p: Result<Path<String>, PathRejection>,
    q: Result<Query<MetricsQuery>, QueryRejection>,
) -> ApiResult<darkit_core::tracker::MetricSeries> {
    let id = path(p)?;
    let q = query(q)?;
    let name = q.name.ok_or_else(|| ApiError::bad_request("query parameter `name` is required"))?;
    let max_points = q.max_points.unwrap_or(DEFAULT_MAX_POINTS);
    with_workbench(wb, move |wb| Ok(wb.tracker().get_series(&id, &name, max_points)?)).await
}

async fn compare(
    State(wb): State<AppState>,
    q: Result<Query<CompareQuery>, QueryRejection>,
) -> ApiResult<darkit_core::tracker::Chart> {
    let q = query(q)?;
    let ids: Vec<String> = q
        .ids
        .unwrap_or_default()
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let name = q.name.ok_or_else(|| ApiError::bad_request("query parameter `name` is required"))?;
    let max_points = q.max_points.unwrap_or(DEFAULT_MAX_POINTS);
    with_workbench(wb, move |wb| Ok(wb.tracker().compare_runs(&ids, &name, max_points)?)).await
}

async fn export(
    State(wb): State<AppState>,
    p: Result<Path<String>, PathRejection>,
    q: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let id = path(p)?;
    let format: ExportFormat = query(q)?
        .format
        .as_deref()
        .unwrap_or("json")
        .parse()
        .map_err(|e: darkit_core::tracker::TrackerError| ApiError::bad_request(e.to_string()))?;
    let Json(text) = with_workbench(wb, move |wb| Ok(wb.tracker().export_run(&id, format)?)).await?;
    let content_type = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], text).into_response())
}

async fn stream(
    State(wb): State<AppState>,
    p: Result<Path<String>, PathRejection>,
) -> Result<Response, ApiError> {
    let id = path(p)?;
    let sub = wb
        .tracker()
        .subscribe(&id)
        .map_err(|e| ApiError::from(WorkbenchError::from(e)))?;
    let events = UnboundedReceiverStream::new(sub.into_receiver())
        .map(|line| Ok::<_, Infallible>(SseEvent::default().data(&*line)));
    Ok(Sse::new(events)
        .keep_alive(KeepAlive::new().interval(HEARTBEAT).text("heartbeat"))
        .into_response())
}

async fn no_route(method: Method, uri: Uri) -> ApiError {
    ApiError::not_found(format!("no route for {method} {}", uri.path()))
}

pub fn router(wb: Arc<Workbench>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/registry", get(list_registry).post(add_registry))
        .route("/api/registry/{kind}/{name}/{version}/verify", post(verify_registry))
        .route("/api/registry/{kind}/{name}/{version}", axum::routing::delete(remove_registry))
        .route("/api/models/{name}/tree", get(model_tree))
        .route("/api/models/{name}/modules/{id}/code", get(module_code))
        .route("/api/models/{name}/modules/{id}/validate", post(validate_patch))
        .route("/api/models/{name}/modules/{id}/patch", post(apply_patch))
        .route("/api/models/{name}/patches", get(patch_history))
        .route("/api/flows/validate", post(flow_validate))
        .route("/api/flows/shapes", post(flow_shapes))
        .route("/api/flows/compile", post(flow_compile))
        .route("/api/commands/render", post(render_command))
        .route("/api/commands/grid", post(expand_grid))
        .route("/api/commands/run", post(run_command))
        .route("/api/runs", get(list_runs).post(create_run))
        .route("/api/runs/simulate", post(simulate_run))
        .route("/api/runs/import", post(import_run))
        .route("/api/runs/compare", get(compare))
        .route("/api/runs/{id}", get(run_detail))
        .route("/api/runs/{id}/events", post(ingest))
        .route("/api/runs/{id}/metrics", get(metrics))
        .route("/api/runs/{id}/stream", get(stream))
        .route("/api/runs/{id}/export", get(export))
        .fallback(no_route)
        .method_not_allowed_fallback(no_route)
        .with_state(wb)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot open data directory: {0}")]
    Open(#[from] WorkbenchError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serves on an already bound listener until `shutdown` resolves; in-flight
/// requests finish first.
pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    wb: Arc<Workbench>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    axum::serve(listener, router(wb))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Opens `data_dir` and serves on `0.0.0.0:port` until Ctrl-C.
pub async fn serve(port: u16, data_dir: PathBuf) -> Result<(), ServeError> {
    let wb = tokio::task::spawn_blocking(move || Workbench::open(data_dir))
        .await
        .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    log::info!("listening on http://{addr}");
    serve_listener(listener, Arc::new(wb), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
