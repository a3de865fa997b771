//! HTTP/JSON case service for examiners and scripted clients.
//!
//! A case holds one questioned signature, an ordered reference set and an
//! evidence configuration. Every mutation bumps `case_version` and clears the
//! stored report, so `GET /report` never serves evidence for inputs that have
//! since changed.

pub mod engine;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use sigproof_core::corpus::PreprocessConfig;
use sigproof_core::evidence::EvidenceReport;
use sigproof_core::features::FeatureConfig;

pub use engine::{Engine, UbmDescriptor, UbmRegistry};
pub use error::{ApiError, ApiResult, ErrorBody};
pub use store::{Case, CaseConfig, CaseStore, CaseView, Role, SpecimenRecord};

pub const MAX_UPLOAD_BYTES: usize = 10 * 1024 * 1024;
pub const MAX_SIDE: u32 = 4096;
pub const DEFAULT_PORT: u16 = 8741;

/// Response header carrying the case version a report or view belongs to.
pub const VERSION_HEADER: &str = "x-case-version";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub ubm_dir: Option<PathBuf>,
    /// Workbench build served at `/`.
    pub static_dir: Option<PathBuf>,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub max_upload_bytes: usize,
    pub max_side: u32,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            ubm_dir: None,
            static_dir: None,
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::checked_in(),
            max_upload_bytes: MAX_UPLOAD_BYTES,
            max_side: MAX_SIDE,
        }
    }
}

pub struct AppState {
    pub store: CaseStore,
    pub engine: Engine,
    max_upload_bytes: usize,
    max_side: u32,
}

impl AppState {
    pub fn new(cfg: &ServiceConfig, registry: UbmRegistry) -> ApiResult<Self> {
        Ok(Self {
            store: CaseStore::open(&cfg.data_dir)?,
            engine: Engine::new(registry, cfg.preprocess, cfg.features.clone()),
            max_upload_bytes: cfg.max_upload_bytes,
            max_side: cfg.max_side,
        })
    }

    /// Loads the UBM directory named in `cfg`, if any.
    pub fn from_config(cfg: &ServiceConfig) -> ApiResult<Self> {
        let registry = match &cfg.ubm_dir {
            Some(dir) => UbmRegistry::load_dir(dir)?,
            None => UbmRegistry::default(),
        };
        Self::new(cfg, registry)
    }
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/ubms", get(list_ubms))
        .route("/api/cases", post(create_case))
        .route("/api/cases/{id}", get(get_case))
        .route("/api/cases/{id}/specimens", post(upload))
        .route("/api/cases/{id}/specimens/{sid}", delete(remove_specimen).get(specimen_image))
        .route("/api/cases/{id}/config", put(set_config))
        .route("/api/cases/{id}/evaluate", post(evaluate))
        .route("/api/cases/{id}/report", get(get_report))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(cfg: ServiceConfig, addr: SocketAddr) -> ApiResult<()> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let app = router(state, cfg.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn versioned<T: serde::Serialize>(version: u64, body: T) -> Response {
    let mut resp = Json(body).into_response();
    resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from(version));
    resp
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn list_ubms(State(st): Shared) -> Json<Vec<UbmDescriptor>> {
    Json(st.engine.registry.describe())
}

async fn create_case(State(st): Shared) -> ApiResult<Response> {
    let config = CaseConfig {
        ubm_id: st.engine.registry.default_id().map(String::from),
        ..CaseConfig::default()
    };
    let case = st.store.create(config)?;
    let mut resp = versioned(case.case_version, json!({ "case_id": case.case_id }));
    *resp.status_mut() = StatusCode::CREATED;
    Ok(resp)
}

async fn get_case(State(st): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let case = st.store.load(&id)?;
    Ok(versioned(case.case_version, CaseView::from(&case)))
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    role: String,
}

fn extension_for(bytes: &[u8]) -> &'static str {
    match image::guess_format(bytes) {
        Ok(image::ImageFormat::Png) => "png",
        Ok(image::ImageFormat::Jpeg) => "jpg",
        Ok(image::ImageFormat::Bmp) => "bmp",
        Ok(image::ImageFormat::Pnm) => "pgm",
        _ => "img",
    }
}

/// Reads image dimensions from the header without decoding the raster.
fn dimensions(bytes: &[u8]) -> ApiResult<(u32, u32)> {
    let unsupported = |e: &dyn std::fmt::Display| ApiError::Pipeline(sigproof_core::Error::UnsupportedFormat(e.to_string()));
    image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| unsupported(&e))?
        .into_dimensions()
        .map_err(|e| unsupported(&e))
}

async fn upload(State(st): Shared, Path(id): Path<String>, Query(q): Query<UploadQuery>, body: Body) -> ApiResult<Response> {
    let role: Role = q.role.parse()?;
    let limit = st.max_upload_bytes;
    let bytes = to_bytes(body, limit).await.map_err(|_| ApiError::PayloadTooLarge {
        size: limit + 1,
        limit,
    })?;
    let (width, height) = dimensions(&bytes)?;
    if width > st.max_side || height > st.max_side {
        return Err(ApiError::ImageTooLarge {
            width,
            height,
            limit: st.max_side,
        });
    }
    // Reject undecodable content before it enters the case.
    let check = bytes.clone();
    blocking(move || Ok(sigproof_core::corpus::load_image_bytes(&check).map(|_| ())?)).await?;

    let _guard = st.store.lock(&id).await;
    let mut case = st.store.load(&id)?;
    let ordinal = case.next_ordinal;
    let specimen_id = format!("s{ordinal}");
    let file = format!("{specimen_id}.{}", extension_for(&bytes));
    st.store.write_image(&id, &file, &bytes)?;
    let record = SpecimenRecord {
        specimen_id: specimen_id.clone(),
        role,
        ordinal,
        file,
        sha256: hex::encode(Sha256::digest(&bytes)),
        width,
        height,
        bytes: bytes.len(),
    };
    match role {
        Role::Questioned => {
            if let Some(old) = case.questioned.replace(record) {
                st.store.remove_image(&id, &old.file)?;
            }
        }
        Role::Reference => case.references.push(record),
    }
    case.next_ordinal += 1;
    case.touch();
    st.store.save(&case)?;
    let mut resp = versioned(case.case_version, json!({ "specimen_id": specimen_id, "role": role }));
    *resp.status_mut() = StatusCode::CREATED;
    Ok(resp)
}

async fn remove_specimen(State(st): Shared, Path((id, sid)): Path<(String, String)>) -> ApiResult<Response> {
    let _guard = st.store.lock(&id).await;
    let mut case = st.store.load(&id)?;
    let removed = if case.questioned.as_ref().is_some_and(|q| q.specimen_id == sid) {
        case.questioned.take()
    } else {
        let pos = case.references.iter().position(|r| r.specimen_id == sid);
        pos.map(|i| case.references.remove(i))
    };
    let removed = removed.ok_or_else(|| ApiError::SpecimenNotFound(sid.clone()))?;
    st.store.remove_image(&id, &removed.file)?;
    case.touch();
    st.store.save(&case)?;
    Ok(versioned(case.case_version, CaseView::from(&case)))
}

async fn specimen_image(State(st): Shared, Path((id, sid)): Path<(String, String)>) -> ApiResult<Response> {
    let case = st.store.load(&id)?;
    let record = case.specimen(&sid).ok_or_else(|| ApiError::SpecimenNotFound(sid.clone()))?;
    let bytes = st.store.read_image(&id, &record.file)?;
    let mime = match image::guess_format(&bytes) {
        Ok(f) => f.to_mime_type(),
        Err(_) => "application/octet-stream",
    };
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(mime));
    Ok((headers, bytes).into_response())
}

async fn set_config(State(st): Shared, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult<Response> {
    let config: CaseConfig = serde_json::from_slice(&body).map_err(|e| ApiError::InvalidConfig(e.to_string()))?;
    config.validate()?;
    if let Some(ubm_id) = &config.ubm_id {
        let index = st
            .engine
            .registry
            .get(ubm_id)
            .ok_or_else(|| ApiError::UbmNotLoaded(ubm_id.clone()))?;
        if let Some(c) = config.channels.iter().find(|c| !index.ubm().channels().contains(c)) {
            return Err(ApiError::InvalidConfig(format!("UBM `{ubm_id}` has no channel {c}")));
        }
    }
    let _guard = st.store.lock(&id).await;
    let mut case = st.store.load(&id)?;
    case.config = config;
    case.touch();
    st.store.save(&case)?;
    Ok(versioned(case.case_version, CaseView::from(&case)))
}

async fn evaluate(State(st): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let _guard = st.store.lock(&id).await;
    let case = st.store.load(&id)?;
    let worker = st.clone();
    let (case, report) = blocking(move || {
        let report = worker
            .engine
            .evaluate(&case, |r| worker.store.read_image(&case.case_id, &r.file))?;
        Ok((case, report))
    })
    .await?;
    let mut case = case;
    case.last_report = Some(report.clone());
    st.store.save(&case)?;
    Ok(versioned(case.case_version, report))
}

async fn get_report(State(st): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let case = st.store.load(&id)?;
    let report: EvidenceReport = case.last_report.ok_or(ApiError::ReportNotFound)?;
    Ok(versioned(case.case_version, report))
}
