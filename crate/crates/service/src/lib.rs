//! JSON API for the figure search engine.
//!
//! | route | |
//! |---|---|
//! | `GET /search?q=&types=&page=&size=` | ranked hits |
//! | `GET /figures/{id}` | detail with siblings and provenance |
//! | `GET /figures/{id}/image` | PNG bytes |
//! | `POST /verifications` | proposed label |
//! | `GET /healthz` | liveness |

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use figmine_core::alef::read_scores;
use figmine_core::corpus::{CorpusError, Manifest};
use figmine_core::search::{self, MatchMode, SearchEngine, SearchError, VerificationLog};
use figmine_core::FigureLabel;

pub const VERIFICATION_LOG_FILE: &str = "verifications.jsonl";
pub const MAX_PAGE_SIZE: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Rank(#[from] figmine_core::alef::RankError),
    #[error("invalid CORS origin `{0}`")]
    Origin(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub manifest_dir: PathBuf,
    pub scores: Option<PathBuf>,
    /// Defaults to `verifications.jsonl` inside the manifest directory.
    pub verification_log: Option<PathBuf>,
    /// Browser origins allowed by CORS; empty allows any origin.
    pub cors_origins: Vec<String>,
    pub addr: SocketAddr,
}

/// Shared handler state. The engine sits behind a lock so a rebuilt index
/// can be swapped in while requests hold the previous one.
#[derive(Clone)]
pub struct AppState {
    engine: Arc<RwLock<Arc<SearchEngine>>>,
    log: Arc<VerificationLog>,
}

impl AppState {
    pub fn new(engine: SearchEngine, log: VerificationLog) -> Self {
        AppState { engine: Arc::new(RwLock::new(Arc::new(engine))), log: Arc::new(log) }
    }

    pub fn engine(&self) -> Arc<SearchEngine> {
        self.engine.read().expect("engine lock").clone()
    }

    pub fn swap(&self, engine: SearchEngine) {
        *self.engine.write().expect("engine lock") = Arc::new(engine);
    }

    pub fn log(&self) -> &VerificationLog {
        &self.log
    }

    /// Loads the manifest, optional scores and the verification log.
    pub fn load(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let manifest = Manifest::load(&config.manifest_dir)?;
        let scores = match &config.scores {
            Some(p) => read_scores(BufReader::new(File::open(p)?))?,
            None => HashMap::new(),
        };
        let store = Manifest::image_store(&config.manifest_dir)?;
        let engine = SearchEngine::new(manifest, &scores, Some(Arc::new(store)));
        let log_path = config.verification_log.clone().unwrap_or_else(|| config.manifest_dir.join(VERIFICATION_LOG_FILE));
        Ok(AppState::new(engine, VerificationLog::open(log_path)?))
    }
}

struct ApiError(SearchError);

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        ApiError(e)
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            SearchError::EmptyQuery | SearchError::BadRequest(_) => StatusCode::BAD_REQUEST,
            SearchError::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
struct SearchParams {
    #[serde(default)]
    q: String,
    /// Comma-separated labels.
    types: Option<String>,
    page: Option<usize>,
    size: Option<usize>,
    mode: Option<String>,
    blended: Option<bool>,
}

impl SearchParams {
    fn into_query(self) -> Result<search::Query, SearchError> {
        let mut q = search::Query::new(&self.q);
        if let Some(t) = self.types.as_deref() {
            q.types = t
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<FigureLabel>().map_err(|e| SearchError::BadRequest(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        q.page = self.page.unwrap_or(0);
        q.size = self.size.unwrap_or(q.size);
        if q.size == 0 || q.size > MAX_PAGE_SIZE {
            return Err(SearchError::BadRequest(format!("size must be in 1..={MAX_PAGE_SIZE}")));
        }
        q.mode = match self.mode.as_deref() {
            None | Some("all") => MatchMode::All,
            Some("any") => MatchMode::Any,
            Some(m) => return Err(SearchError::BadRequest(format!("unknown mode `{m}`"))),
        };
        q.blended = self.blended.unwrap_or(false);
        Ok(q)
    }
}

async fn search_handler(State(st): State<AppState>, Query(params): Query<SearchParams>) -> Result<Json<search::SearchPage>, ApiError> {
    let q = params.into_query()?;
    Ok(Json(st.engine().search(&q)?))
}

async fn figure_handler(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<search::FigureDetail>, ApiError> {
    Ok(Json(st.engine().figure_detail(&id)?))
}

async fn image_handler(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = st.engine().image_png(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct VerificationBody {
    figure_id: String,
    #[serde(alias = "proposed_label")]
    label: String,
    client_token: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct VerificationReply {
    pub accepted: bool,
    /// False when the same event was already logged within the dedup window.
    pub appended: bool,
}

async fn verification_handler(State(st): State<AppState>, Json(body): Json<VerificationBody>) -> Result<Response, ApiError> {
    let engine = st.engine();
    let sub = engine.submit_verification(st.log(), &body.figure_id, &body.label, &body.client_token, chrono::Utc::now())?;
    let status = if sub.appended { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(VerificationReply { accepted: true, appended: sub.appended })).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub figures: usize,
    pub verifications: usize,
}

async fn health_handler(State(st): State<AppState>) -> Json<Health> {
    Json(Health { status: "ok".into(), figures: st.engine().index().len(), verifications: st.log().len() })
}

fn cors(origins: &[String]) -> Result<CorsLayer, ServiceError> {
    let layer = CorsLayer::new().allow_methods([Method::GET, Method::POST]).allow_headers([header::CONTENT_TYPE]);
    if origins.is_empty() {
        return Ok(layer.allow_origin(Any));
    }
    let values = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Origin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layer.allow_origin(AllowOrigin::list(values)))
}

pub fn router(state: AppState, cors_origins: &[String]) -> Result<Router, ServiceError> {
    Ok(Router::new()
        .route("/search", get(search_handler))
        .route("/figures/{id}", get(figure_handler))
        .route("/figures/{id}/image", get(image_handler))
        .route("/verifications", post(verification_handler))
        .route("/healthz", get(health_handler))
        .layer(cors(cors_origins)?)
        .with_state(state))
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::load(&config)?;
    let app = router(state, &config.cors_origins)?;
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
