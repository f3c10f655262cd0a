//! HTTP JSON service over an immutable geocircle snapshot, with background
//! reloading that swaps whole snapshots atomically.

pub mod config;

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::header::{HeaderValue, CONTENT_TYPE};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use geocircle_core::api::{self, ApiDefaults, ApiError, Endpoint, Format};
use geocircle_core::snapshot::{self, SnapshotError};
use geocircle_core::Engine;
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use config::{ConfigError, ServerConfig};

pub const VERSION_HEADER: &str = "x-dataset-version";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared state: the current engine, replaced wholesale on refresh.
pub struct AppState {
    engine: RwLock<Option<Arc<Engine>>>,
    defaults: ApiDefaults,
    data_dir: PathBuf,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>, defaults: ApiDefaults) -> Self {
        AppState {
            engine: RwLock::new(None),
            defaults,
            data_dir: data_dir.into(),
        }
    }

    pub fn with_engine(engine: Engine, defaults: ApiDefaults) -> Self {
        let state = AppState::new(PathBuf::new(), defaults);
        state.install(engine);
        state
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn current(&self) -> Option<Arc<Engine>> {
        self.engine.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn install(&self, engine: Engine) {
        *self.engine.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(engine));
    }

    /// Reloads the snapshot from the data directory. Returns whether the
    /// dataset version changed; an identical snapshot is not swapped.
    pub fn refresh(&self) -> Result<bool, SnapshotError> {
        let bytes = snapshot::read_dir(&self.data_dir)?;
        let version = snapshot::content_version(&bytes);
        if self.current().is_some_and(|e| e.version() == version) {
            return Ok(false);
        }
        let engine = Engine::from_snapshot(&bytes)?;
        self.install(engine);
        Ok(true)
    }
}

fn respond(status: StatusCode, content_type: &'static str, version: Option<&str>, body: Vec<u8>) -> Response {
    let mut res = (status, body).into_response();
    res.headers_mut().insert(CONTENT_TYPE, HeaderValue::from_static(content_type));
    if let Some(v) = version.and_then(|v| HeaderValue::from_str(v).ok()) {
        res.headers_mut().insert(VERSION_HEADER, v);
    }
    res
}

fn error_response(err: &ApiError, version: Option<&str>) -> Response {
    let status = StatusCode::from_u16(err.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    respond(status, "application/json", version, err.body())
}

async fn endpoint(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    Query(mut params): Query<Vec<(String, String)>>,
) -> Response {
    let endpoint: Endpoint = match name.parse() {
        Ok(e) => e,
        Err(err) => return error_response(&err, None),
    };
    let Some(engine) = state.current() else {
        return error_response(&ApiError::unavailable("no dataset loaded yet"), None);
    };
    let format = match params.iter().rposition(|(k, _)| k == "format") {
        Some(i) => match params.remove(i).1.parse::<Format>() {
            Ok(f) => f,
            Err(err) => return error_response(&err, Some(engine.version())),
        },
        None => Format::Json,
    };
    let defaults = state.defaults;
    let worker = Arc::clone(&engine);
    let result = tokio::task::spawn_blocking(move || api::handle(&worker, &defaults, endpoint, &params, format)).await;
    match result {
        Ok(Ok(body)) => respond(StatusCode::OK, format.content_type(), Some(engine.version()), body),
        Ok(Err(err)) => error_response(&err, Some(engine.version())),
        Err(join) => {
            tracing::error!(error = %join, "request handler failed");
            error_response(
                &ApiError {
                    status: 500,
                    message: "internal error".into(),
                },
                Some(engine.version()),
            )
        }
    }
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let uri = req.uri().clone();
    let started = Instant::now();
    let res = next.run(req).await;
    tracing::info!(
        "{} {} {} {:.1}ms",
        method,
        uri,
        res.status().as_u16(),
        started.elapsed().as_secs_f64() * 1e3
    );
    res
}

fn cors(allow: &[String]) -> Option<CorsLayer> {
    if allow.is_empty() {
        return None;
    }
    let origin = if allow.iter().any(|o| o == "*") {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(allow.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([axum::http::Method::GET])
            .expose_headers([axum::http::HeaderName::from_static(VERSION_HEADER)]),
    )
}

/// `GET /api/{meta,regions,frame,series,pick,threshold}`; add `format=csv`
/// for CSV bodies.
pub fn router(state: Arc<AppState>, cors_allow: &[String]) -> Router {
    let router = Router::new()
        .route("/api/{endpoint}", get(endpoint))
        .with_state(state)
        .layer(middleware::from_fn(log_request));
    match cors(cors_allow) {
        Some(layer) => router.layer(layer),
        None => router,
    }
}

/// Periodically reloads the snapshot; failures keep the current one.
pub async fn refresh_loop(state: Arc<AppState>, every: Duration) {
    let mut ticker = tokio::time::interval(every);
    ticker.tick().await;
    loop {
        ticker.tick().await;
        let s = Arc::clone(&state);
        match tokio::task::spawn_blocking(move || s.refresh()).await {
            Ok(Ok(true)) => tracing::info!(version = ?state.current().map(|e| e.version().to_string()), "dataset swapped"),
            Ok(Ok(false)) => {}
            Ok(Err(e)) => tracing::warn!(error = %e, "refresh failed, keeping current dataset"),
            Err(e) => tracing::warn!(error = %e, "refresh task failed"),
        }
    }
}

/// Loads the snapshot, binds the listener and serves until the process ends.
/// `on_ready` receives the bound address.
pub async fn serve(config: ServerConfig, on_ready: impl FnOnce(std::net::SocketAddr)) -> Result<(), ServeError> {
    config.validate()?;
    let addr = config.listen_addr()?;
    let state = Arc::new(AppState::new(&config.data_dir, config.api_defaults()));
    state.refresh()?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr()?;
    if config.refresh_secs > 0 {
        tokio::spawn(refresh_loop(Arc::clone(&state), Duration::from_secs(config.refresh_secs)));
    }
    on_ready(local);
    axum::serve(listener, router(state, &config.cors_allow)).await?;
    Ok(())
}
