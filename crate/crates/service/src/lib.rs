//! Demo-capture HTTP service.
//!
//! Browsers play sessions move by move through a JSON API; finished games
//! are stored as human trajectories that the training pipeline can consume.
//! See the workspace README for the route and render-state reference.

pub mod catalog;
pub mod routes;
pub mod sessions;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

pub use catalog::Catalog;
pub use routes::router;
pub use sessions::{RenderState, Sessions};
pub use store::Store;

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session")]
    SessionNotFound,
    #[error("unknown trajectory")]
    TrajectoryNotFound,
    #[error("unknown map {0:?}")]
    MapNotFound(String),
    #[error("session expired")]
    Expired,
    #[error("game is over")]
    Terminal,
    #[error("game is not finished yet")]
    NotTerminal,
    #[error("{0}")]
    Unprocessable(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] trajsynth::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::SessionNotFound | ServiceError::TrajectoryNotFound | ServiceError::MapNotFound(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::Expired => StatusCode::GONE,
            ServiceError::Terminal | ServiceError::NotTerminal => StatusCode::CONFLICT,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Config(_) | ServiceError::Core(_) | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub maps_dir: Option<PathBuf>,
    pub datasets_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub ttl: Duration,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Config {
    pub fn new(datasets_dir: impl Into<PathBuf>) -> Self {
        Config {
            maps_dir: None,
            datasets_dir: datasets_dir.into(),
            static_dir: None,
            ttl: DEFAULT_TTL,
            cors_origin: None,
        }
    }
}

pub struct AppState {
    pub catalog: Catalog,
    pub sessions: Sessions,
    pub store: Store,
}

impl AppState {
    pub fn from_config(cfg: &Config) -> Result<Arc<Self>, ServiceError> {
        let catalog = match &cfg.maps_dir {
            Some(dir) => Catalog::with_dir(dir)?,
            None => Catalog::bundled(),
        };
        Ok(Arc::new(AppState {
            catalog,
            sessions: Sessions::new(cfg.ttl),
            store: Store::new(cfg.datasets_dir.clone()),
        }))
    }
}

/// Binds `addr` and serves until the process is stopped. Idle sessions are
/// swept once a minute.
pub async fn serve(cfg: Config, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = AppState::from_config(&cfg)?;
    let app = router(state.clone(), &cfg)?;
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.sessions.sweep();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
