use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;
use trajsynth::{Action, GameKind, Source, Trajectory};

use crate::catalog::MapEntry;
use crate::sessions::{RenderState, Session};
use crate::store::{Filter, TrajSummary};
use crate::{AppState, Config, ServiceError};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

pub fn router(state: Arc<AppState>, cfg: &Config) -> Result<Router, ServiceError> {
    let cors = match &cfg.cors_origin {
        Some(origin) => {
            let origin = HeaderValue::from_str(origin).map_err(|e| ServiceError::Config(format!("cors origin: {e}")))?;
            CorsLayer::new().allow_origin(origin)
        }
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);

    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_state))
        .route("/api/sessions/{id}/actions", post(post_action))
        .route("/api/sessions/{id}/save", post(save_trajectory))
        .route("/api/maps", get(list_maps))
        .route("/api/trajectories", get(list_trajectories))
        .route("/api/trajectories/{id}", get(get_trajectory))
        .with_state(state);
    let app = match &cfg.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    Ok(app.layer(cors))
}

/// Parses a JSON body, reporting any problem as 422.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ServiceError> {
    let text = if body.is_empty() { &b"{}"[..] } else { &body[..] };
    serde_json::from_slice(text).map_err(|e| ServiceError::Unprocessable(e.to_string()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    game: Option<String>,
    map: Option<String>,
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
    created_at: String,
    ttl_seconds: u64,
    map: MapEntry,
    state: RenderState,
}

async fn create_session(State(app): Shared, body: Bytes) -> Result<(StatusCode, Json<Created>), ServiceError> {
    let req: CreateRequest = parse_body(&body)?;
    let kind = req
        .game
        .as_deref()
        .map(|g| g.parse::<GameKind>().map_err(ServiceError::Unprocessable))
        .transpose()?;
    let chosen = match (&req.map, kind) {
        (Some(name), _) => app
            .catalog
            .get(name)
            .ok_or_else(|| ServiceError::MapNotFound(name.clone()))?,
        (None, Some(kind)) => app
            .catalog
            .default_for(kind)
            .ok_or_else(|| ServiceError::MapNotFound(kind.to_string()))?,
        (None, None) => return Err(ServiceError::Unprocessable("give a game or a map".into())),
    };
    if kind.is_some_and(|k| k != chosen.entry.game) {
        return Err(ServiceError::Unprocessable(format!(
            "map {} is a {} map",
            chosen.entry.name, chosen.entry.game
        )));
    }
    app.sessions.sweep();
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created_at = chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string();
    let session = Session::new(id.clone(), chosen.entry.clone(), chosen.game.clone(), created_at.clone());
    let state = session.render();
    app.sessions.insert(session);
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            created_at,
            ttl_seconds: app.sessions.ttl().as_secs(),
            map: chosen.entry.clone(),
            state,
        }),
    ))
}

async fn get_state(State(app): Shared, Path(id): Path<String>) -> ApiResult<RenderState> {
    let handle = app.sessions.get(&id)?;
    let s = handle.lock().unwrap();
    Ok(Json(s.render()))
}

#[derive(Debug, Deserialize)]
struct ActionRequest {
    action_id: Value,
}

async fn post_action(State(app): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<RenderState> {
    let handle = app.sessions.get(&id)?;
    let req: ActionRequest = parse_body(&body)?;
    let action = req
        .action_id
        .as_u64()
        .and_then(|a| Action::from_id(a as usize))
        .ok_or_else(|| ServiceError::Unprocessable("action_id must be an integer in 0..=3".into()))?;
    let mut s = handle.lock().unwrap();
    s.step(action)?;
    Ok(Json(s.render()))
}

#[derive(Debug, Deserialize)]
struct SaveRequest {
    label: Option<String>,
}

#[derive(Debug, Serialize)]
struct Saved {
    trajectory_id: String,
    steps: usize,
    outcome: trajsynth::Status,
}

async fn save_trajectory(State(app): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Saved> {
    let handle = app.sessions.get(&id)?;
    let req: SaveRequest = parse_body(&body)?;
    let mut s = handle.lock().unwrap();
    if !s.state.status.is_terminal() {
        return Err(ServiceError::NotTerminal);
    }
    if s.saved_as.is_none() {
        let mut record = s.log.clone();
        record.label = req.label;
        record.created_at = s.created_at.clone();
        let tid = app.store.save_human(&record, &s.game, &s.map.name)?;
        s.saved_as = Some(tid);
    }
    Ok(Json(Saved {
        trajectory_id: s.saved_as.clone().unwrap_or_default(),
        steps: s.log.len(),
        outcome: s.log.outcome,
    }))
}

async fn list_maps(State(app): Shared) -> Json<Vec<MapEntry>> {
    Json(app.catalog.entries().cloned().collect())
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    game: Option<String>,
    source: Option<String>,
    map_id: Option<String>,
}

async fn list_trajectories(State(app): Shared, Query(q): Query<ListQuery>) -> ApiResult<Vec<TrajSummary>> {
    let filter = Filter {
        game: q
            .game
            .map(|g| g.parse::<GameKind>().map_err(ServiceError::Unprocessable))
            .transpose()?,
        source: q
            .source
            .map(|s| s.parse::<Source>().map_err(ServiceError::Unprocessable))
            .transpose()?,
        map_id: q.map_id,
    };
    Ok(Json(app.store.list(&filter)?))
}

#[derive(Debug, Serialize)]
struct TrajectoryPayload {
    id: String,
    map: Option<MapEntry>,
    trajectory: Trajectory,
}

async fn get_trajectory(State(app): Shared, Path(id): Path<String>) -> ApiResult<TrajectoryPayload> {
    let trajectory = app.store.get(&id)?;
    let map = app.catalog.by_map_id(&trajectory.map_id).map(|m| m.entry.clone());
    Ok(Json(TrajectoryPayload { id, map, trajectory }))
}
