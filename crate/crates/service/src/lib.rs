//! HTTP/JSON front end for an interactive re-fitting session.
//!
//! All state lives in one [`Workbench`]. Reads take a snapshot of the
//! relevant version and release the lock before computing; refits are
//! computed outside the lock and committed through the workbench, which
//! rejects results whose base version is no longer current.

pub mod dto;
pub mod error;

use std::fs::File;
use std::io::{self, BufReader};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, PoisonError};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tower_http::services::ServeDir;

use refit_core::journal::Journal;
use refit_core::projection::{project_versions, project_words};
use refit_core::refit::refit;
use refit_core::similarity::{distance_report, top_k};
use refit_core::store::load_text;
use refit_core::{Space, TextFormat, VersionId, Workbench};

pub use dto::*;
pub use error::{ApiError, ErrorCode};

pub const DEFAULT_K: usize = 10;

type ApiResult<T> = Result<ApiJson<T>, ApiError>;

/// Shared handle on the session.
#[derive(Clone)]
pub struct AppState {
    bench: Arc<Mutex<Workbench>>,
}

impl AppState {
    pub fn new(bench: Workbench) -> Self {
        AppState {
            bench: Arc::new(Mutex::new(bench)),
        }
    }

    pub fn workbench(&self) -> MutexGuard<'_, Workbench> {
        self.bench.lock().unwrap_or_else(PoisonError::into_inner)
    }

    fn space(&self, version: Option<VersionId>) -> Result<(Arc<Space>, VersionId), ApiError> {
        let bench = self.workbench();
        match version {
            None => Ok((bench.current(), bench.version())),
            Some(v) => Ok((bench.store().get(v)?, v)),
        }
    }

    fn ensure_current(&self, base: Option<VersionId>) -> Result<(), ApiError> {
        let current = self.workbench().version();
        match base {
            Some(expected) if expected != current => Err(refit_core::Error::VersionMismatch { expected, current }.into()),
            _ => Ok(()),
        }
    }
}

/// Loads a space and opens (or creates) its journal. Existing journal
/// records are re-executed so the session resumes at its last version.
pub fn open_workbench(embeddings: &Path, format: TextFormat, journal: Option<&Path>) -> refit_core::Result<Workbench> {
    let space = load_space(embeddings, format)?;
    let journal = match journal {
        Some(path) => Journal::open(path)?,
        None => Journal::in_memory(),
    };
    Workbench::new(space, journal)
}

pub fn load_space(path: &Path, format: TextFormat) -> refit_core::Result<Space> {
    load_text(BufReader::new(File::open(path)?), format)
}

/// Routes under `/api/v1`.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/search", get(search))
        .route("/api/v1/refit", post(refit_handler))
        .route("/api/v1/undo", post(undo))
        .route("/api/v1/snapshot", post(snapshot))
        .route("/api/v1/journal", get(journal))
        .route("/api/v1/project", post(project))
        .route("/api/v1/project/compare", post(compare))
        .route("/api/v1/distances", get(distances))
        .route("/api/v1/meta", get(meta))
        .with_state(state)
}

/// [`router`] plus static files from `ui_dir` for every other path.
pub fn router_with_ui(state: AppState, ui_dir: Option<&Path>) -> Router {
    let api = router(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> io::Result<()> {
    tracing::info!(addr = ?listener.local_addr()?, "listening");
    axum::serve(listener, app).await
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn json<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

/// Parses an optional JSON body; an empty body means all defaults.
fn optional_json<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
struct SearchQuery {
    q: String,
    k: Option<i64>,
}

async fn search(State(state): State<AppState>, q: Result<Query<SearchQuery>, QueryRejection>) -> ApiResult<SearchResponse> {
    let q = query(q)?;
    let k = match q.k {
        None => DEFAULT_K,
        Some(k) => usize::try_from(k).map_err(|_| ApiError::bad_request(format!("k must be non-negative, got {k}")))?,
    };
    let (space, version) = state.space(None)?;
    let result = top_k(&space, &q.q, k)?;
    state.workbench().record_search(&q.q, k, version)?;
    Ok(ApiJson(SearchResponse {
        query: q.q,
        version,
        hits: result.hits,
    }))
}

async fn refit_handler(State(state): State<AppState>, body: Result<Json<RefitRequest>, JsonRejection>) -> ApiResult<RefitReport> {
    let req = json(body)?;
    state.ensure_current(Some(req.base_version))?;
    let (spec, params) = req.resolve()?;
    let (space, _) = state.space(Some(req.base_version))?;
    let (spec, params, outcome) = tokio::task::spawn_blocking(move || {
        let outcome = refit(&space, &spec, &params);
        (spec, params, outcome)
    })
    .await
    .map_err(|e| ApiError::internal(format!("refit task failed: {e}")))?;
    let outcome = outcome?;
    let version = state.workbench().commit_refit(&spec, &params, &outcome)?;
    Ok(ApiJson(RefitReport::new(&spec, outcome, version)))
}

async fn undo(State(state): State<AppState>, body: Bytes) -> ApiResult<VersionResponse> {
    let req: BaseBody = optional_json(&body)?;
    let mut bench = state.workbench();
    if let Some(expected) = req.base_version {
        if expected != bench.version() {
            return Err(refit_core::Error::VersionMismatch {
                expected,
                current: bench.version(),
            }
            .into());
        }
    }
    let version = bench.undo()?;
    Ok(ApiJson(VersionResponse { version }))
}

async fn snapshot(State(state): State<AppState>, body: Bytes) -> ApiResult<VersionResponse> {
    let req: SnapshotRequest = optional_json(&body)?;
    let mut bench = state.workbench();
    if let Some(expected) = req.base_version {
        if expected != bench.version() {
            return Err(refit_core::Error::VersionMismatch {
                expected,
                current: bench.version(),
            }
            .into());
        }
    }
    let version = bench.snapshot(req.label)?;
    Ok(ApiJson(VersionResponse { version }))
}

async fn journal(State(state): State<AppState>) -> ApiResult<JournalResponse> {
    let records = state.workbench().records().to_vec();
    Ok(ApiJson(JournalResponse { records }))
}

async fn project(State(state): State<AppState>, body: Result<Json<ProjectRequest>, JsonRejection>) -> ApiResult<ProjectResponse> {
    let req = json(body)?;
    let (space, version) = state.space(req.version)?;
    let p = project_words(&space, &req.words)?;
    Ok(ApiJson(ProjectResponse {
        version,
        words: p.words,
        coords: p.coords,
    }))
}

async fn compare(State(state): State<AppState>, body: Result<Json<CompareRequest>, JsonRejection>) -> ApiResult<CompareResponse> {
    let req = json(body)?;
    let (before_space, before) = state.space(Some(req.before))?;
    let (after_space, after) = state.space(req.after)?;
    let (pb, pa) = project_versions(&before_space, &after_space, &req.words)?;
    Ok(ApiJson(CompareResponse {
        before: ProjectResponse {
            version: before,
            words: pb.words,
            coords: pb.coords,
        },
        after: ProjectResponse {
            version: after,
            words: pa.words,
            coords: pa.coords,
        },
    }))
}

#[derive(Deserialize)]
struct DistancesQuery {
    words: String,
    version: Option<VersionId>,
}

async fn distances(State(state): State<AppState>, q: Result<Query<DistancesQuery>, QueryRejection>) -> ApiResult<DistancesResponse> {
    let q = query(q)?;
    let words = split_words(&q.words);
    if words.is_empty() {
        return Err(ApiError::bad_request("words must list at least one word"));
    }
    let (space, version) = state.space(q.version)?;
    let report = distance_report(&space, &words)?;
    Ok(ApiJson(DistancesResponse { version, report }))
}

async fn meta(State(state): State<AppState>) -> ApiResult<MetaResponse> {
    let bench = state.workbench();
    let space = bench.current();
    Ok(ApiJson(MetaResponse {
        version: bench.version(),
        vocab_size: space.len(),
        dim: space.dim(),
        can_undo: bench.can_undo(),
    }))
}
