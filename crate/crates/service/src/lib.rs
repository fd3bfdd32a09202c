//! HTTP API over the severity pipeline. Uploads are stored per job under
//! the data directory together with the report and an annotated image, and
//! can be fetched again through the jobs endpoint after a restart.

pub mod store;

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use leafsev_core::raster::{decode_image, encode_png, SourceFormat};
use leafsev_core::severity::{quantify_detailed, ColorMode, QuantConfig};
use leafsev_core::{Error, ErrorInfo};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;
use uuid::Uuid;

pub use store::{JobRecord, JobStatus, JobStore};

pub const DEFAULT_MAX_BODY: usize = 20 * 1024 * 1024;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub max_body: usize,
    /// Concurrent quantifications; further requests wait for a slot.
    pub workers: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            max_body: DEFAULT_MAX_BODY,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<JobStore>,
    permits: Arc<Semaphore>,
    max_body: usize,
}

impl AppState {
    pub fn open(cfg: &ServiceConfig) -> std::io::Result<Self> {
        Ok(Self {
            store: Arc::new(JobStore::open(&cfg.data_dir)?),
            permits: Arc::new(Semaphore::new(cfg.workers.max(1))),
            max_body: cfg.max_body,
        })
    }

    pub fn store(&self) -> &JobStore {
        &self.store
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.max_body;
    Router::new()
        .route("/v1/quantify", post(quantify))
        .route("/v1/jobs/{id}", get(job))
        .route("/v1/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: ErrorInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    job_id: Option<Uuid>,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    info: ErrorInfo,
    job_id: Option<Uuid>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            info: ErrorInfo {
                kind: kind.to_string(),
                message: message.into(),
            },
            job_id: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "argument", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.info,
            job_id: self.job_id,
        };
        (self.status, Json(body)).into_response()
    }
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Argument(_) => StatusCode::BAD_REQUEST,
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

/// Builds the pipeline configuration from `mode`, `k`, `seed`, `iters` and
/// `rect` query parameters.
pub fn config_from_query(params: &HashMap<String, String>) -> Result<QuantConfig, String> {
    let mut cfg = QuantConfig::default();
    for (key, value) in params {
        match key.as_str() {
            "mode" => cfg.mode = value.parse::<ColorMode>().map_err(|e| e.to_string())?,
            "k" => cfg.k = value.parse().map_err(|_| format!("k must be an integer, got {value:?}"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| format!("seed must be an unsigned integer, got {value:?}"))?,
            "iters" => {
                cfg.iterations = value.parse().map_err(|_| format!("iters must be an integer, got {value:?}"))?
            }
            "rect" => cfg.rect = Some(value.parse().map_err(|e: Error| e.to_string())?),
            other => return Err(format!("unknown query parameter {other:?}")),
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

struct Upload {
    name: Option<String>,
    bytes: Vec<u8>,
}

async fn read_upload(mut multipart: Multipart) -> Result<Upload, ApiError> {
    loop {
        let field = multipart
            .next_field()
            .await
            .map_err(|e| ApiError::new(e.status(), "upload", e.body_text()))?;
        let Some(field) = field else {
            return Err(ApiError::bad_request("multipart body has no image part (expected field \"image\")"));
        };
        let wanted = matches!(field.name(), Some("image" | "file")) || field.file_name().is_some();
        if !wanted {
            continue;
        }
        let name = field.file_name().map(str::to_string);
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::new(e.status(), "upload", e.body_text()))?;
        return Ok(Upload {
            name,
            bytes: bytes.to_vec(),
        });
    }
}

async fn quantify(
    State(app): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Response, ApiError> {
    let cfg = config_from_query(&params).map_err(ApiError::bad_request)?;
    let multipart = multipart.map_err(|e| ApiError::new(e.status(), "upload", e.body_text()))?;
    let upload = read_upload(multipart).await?;

    let id = Uuid::new_v4();
    let permit = app
        .permits
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::internal("worker pool closed"))?;
    let store = app.store.clone();
    let record = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        run_job(&store, id, upload, cfg)
    })
    .await
    .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))??;

    let mut resp = Json(record.report.expect("DONE record carries a report")).into_response();
    let headers = resp.headers_mut();
    if let Ok(v) = HeaderValue::from_str(&id.to_string()) {
        headers.insert("x-job-id", v);
    }
    if let Ok(v) = HeaderValue::from_str(&format!("/v1/jobs/{id}")) {
        headers.insert(header::LOCATION, v);
    }
    Ok(resp)
}

/// Stores the upload, runs the pipeline and commits the job record.
/// Returns the DONE record, or the error with the FAILED job's id.
fn run_job(store: &JobStore, id: Uuid, upload: Upload, cfg: QuantConfig) -> Result<JobRecord, ApiError> {
    let received_at = Utc::now();
    let dir = store.job_dir(id);
    let io_err = |e: std::io::Error| ApiError::internal(format!("storage error: {e}"));
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let ext = SourceFormat::sniff(&upload.bytes).map_or("bin", SourceFormat::extension);
    let file_name = format!("original.{ext}");
    std::fs::write(dir.join(&file_name), &upload.bytes).map_err(io_err)?;

    let mut record = JobRecord {
        id,
        received_at,
        image_path: format!("{id}/{file_name}"),
        upload_name: upload.name.clone(),
        sha256: hex::encode(Sha256::digest(&upload.bytes)),
        config: cfg.clone(),
        status: JobStatus::Failed,
        report: None,
        error: None,
    };

    let outcome = decode_image(&upload.bytes).and_then(|img| quantify_detailed(&img, &cfg));
    match outcome {
        Ok(mut q) => {
            q.report.image = upload.name.unwrap_or(file_name);
            std::fs::write(dir.join(store::REPORT_FILE), serde_json::to_vec_pretty(&q.report).map_err(|e| ApiError::internal(e.to_string()))?)
                .map_err(io_err)?;
            std::fs::write(dir.join(store::ANNOTATED_FILE), encode_png(&q.annotated())).map_err(io_err)?;
            record.status = JobStatus::Done;
            record.report = Some(q.report);
            store.commit(record.clone()).map_err(io_err)?;
            tracing::info!(%id, ds = record.report.as_ref().map(|r| r.ds), "job done");
            Ok(record)
        }
        Err(e) => {
            let info = ErrorInfo::from(&e);
            record.error = Some(info.clone());
            store.commit(record).map_err(io_err)?;
            tracing::info!(%id, error = %e, "job failed");
            Err(ApiError {
                status: status_for(&e),
                info,
                job_id: Some(id),
            })
        }
    }
}

async fn job(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no job {id:?}"));
    let uuid = Uuid::parse_str(&id).map_err(|_| not_found())?;
    app.store.get(uuid).map(Json).ok_or_else(not_found)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": VERSION }))
}
