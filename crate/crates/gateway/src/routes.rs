use std::sync::Arc;

use aeronav_core::gsm::Channel;
use aeronav_core::sim::is_success;
use aeronav_core::worldmodel::io::landmarks_geojson;
use aeronav_core::Action;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::session::{render_png, RenderMode, Session, StateView};
use crate::{ApiError, AppState};

const PNG: &str = "image/png";
const IMMUTABLE: &str = "public, max-age=31536000, immutable";

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/scenes/{id}/map", get(scene_map))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/rollback", post(rollback))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/render", get(render))
        .route("/sessions/{id}/gsm", get(gsm))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub scene_id: String,
    /// An episode id, or "random" (also the default).
    #[serde(default)]
    pub episode_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
    scene_id: String,
    episode_id: String,
    description: String,
    start_state: StateView,
    map_geojson_url: String,
    render_urls: RenderUrls,
    gsm_url: String,
}

#[derive(Debug, Serialize)]
struct RenderUrls {
    topdown: String,
    oblique: String,
}

#[derive(Debug, Serialize)]
struct Stepped {
    state: StateView,
    render_urls: RenderUrls,
    gsm_url: String,
    done: bool,
}

#[derive(Debug, Serialize)]
struct Submitted {
    distance_to_goal: f64,
    success: bool,
    trajectory_id: String,
}

#[derive(Debug, Deserialize)]
struct ActionBody {
    action: String,
}

#[derive(Debug, Deserialize)]
struct RenderQuery {
    mode: Option<String>,
    rev: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct GsmQuery {
    channel: Option<String>,
    rev: Option<u64>,
}

fn render_urls(id: &str, rev: u64) -> RenderUrls {
    RenderUrls {
        topdown: format!("/sessions/{id}/render?mode=topdown&rev={rev}"),
        oblique: format!("/sessions/{id}/render?mode=oblique&rev={rev}"),
    }
}

fn gsm_url(id: &str, rev: u64) -> String {
    format!("/sessions/{id}/gsm?rev={rev}")
}

fn stepped(id: &str, state: StateView) -> Json<Stepped> {
    Json(Stepped {
        render_urls: render_urls(id, state.revision),
        gsm_url: gsm_url(id, state.revision),
        done: state.done,
        state,
    })
}

fn new_session_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl AppState {
    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        if let Some(s) = self.0.sessions.read().expect("session table lock").get(id) {
            return Ok(s.clone());
        }
        if self.0.submitted.lock().expect("submitted set lock").contains(id) {
            return Err(ApiError::Conflict(format!("session {id} was submitted")));
        }
        Err(ApiError::NotFound(format!("session {id}")))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn healthz(State(app): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "scenes": app.0.scenes.len(),
        "active_sessions": app.active_sessions(),
    }))
}

async fn scene_map(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let scene = app.0.scenes.get(&id).ok_or_else(|| ApiError::NotFound(format!("scene {id}")))?;
    let body = serde_json::to_vec(&landmarks_geojson(scene)).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "application/geo+json")], body).into_response())
}

async fn create_session(
    State(app): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let inner = &app.0;
    let scene = inner
        .scenes
        .get(&req.scene_id)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("scene {}", req.scene_id)))?;
    let episode = match req.episode_id.as_deref() {
        None | Some("random") => {
            let ids = inner
                .by_scene
                .get(&req.scene_id)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| ApiError::NotFound(format!("no episodes in scene {}", req.scene_id)))?;
            inner.episodes[&ids[rand::random_range(0..ids.len())]].clone()
        }
        Some(e) => inner
            .episodes
            .get(e)
            .filter(|ep| ep.scene_id == req.scene_id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("episode {e} in scene {}", req.scene_id)))?,
    };
    let limit = inner.config.max_sessions;
    if app.active_sessions() >= limit {
        return Err(ApiError::TooManySessions(limit));
    }
    let id = new_session_id();
    let cfg = inner.config.session;
    let sid = id.clone();
    let session = blocking(move || Session::new(sid, scene, episode, cfg)).await?;
    let body = Created {
        session_id: id.clone(),
        scene_id: session.episode.scene_id.clone(),
        episode_id: session.episode.id.clone(),
        description: session.episode.description.clone(),
        start_state: session.view(),
        map_geojson_url: format!("/scenes/{}/map", session.episode.scene_id),
        render_urls: render_urls(&id, 0),
        gsm_url: gsm_url(&id, 0),
    };
    {
        let mut table = inner.sessions.write().expect("session table lock");
        if table.len() >= limit {
            return Err(ApiError::TooManySessions(limit));
        }
        table.insert(id, Arc::new(Mutex::new(session)));
    }
    Ok((StatusCode::CREATED, Json(body)))
}

async fn action(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ActionBody>,
) -> Result<Json<Stepped>, ApiError> {
    let a: Action = body.action.parse().map_err(|e: aeronav_core::geodesy::UnknownAction| ApiError::BadRequest(e.to_string()))?;
    let mut guard = app.session(&id)?.lock_owned().await;
    let view = blocking(move || guard.act(a)).await?;
    Ok(stepped(&id, view))
}

async fn rollback(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Stepped>, ApiError> {
    let mut guard = app.session(&id)?.lock_owned().await;
    let view = blocking(move || guard.rollback()).await?;
    Ok(stepped(&id, view))
}

async fn submit(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Submitted>, ApiError> {
    let mut s = app.session(&id)?.lock_owned().await;
    if s.submitted {
        return Err(ApiError::Conflict(format!("session {id} was submitted")));
    }
    let log = s.finish();
    let body = Submitted {
        distance_to_goal: log.outcome.final_distance,
        success: is_success(log.final_pose(), &s.episode.goal_center),
        trajectory_id: log.trajectory_id.clone(),
    };
    app.0.writer.append(log).await?;
    s.submitted = true;
    app.0.submitted.lock().expect("submitted set lock").insert(id.clone());
    app.0.sessions.write().expect("session table lock").remove(&id);
    Ok(Json(body))
}

async fn render(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
) -> Result<Response, ApiError> {
    let mode = match q.mode.as_deref() {
        None | Some("topdown") => RenderMode::Topdown,
        Some("oblique") => RenderMode::Oblique,
        Some(m) => return Err(ApiError::BadRequest(format!("unknown render mode `{m}`"))),
    };
    let (scene, pose, goal) = {
        let s = app.session(&id)?;
        let s = s.lock().await;
        (s.scene.clone(), s.render_target(q.rev, mode)?, s.episode.goal_object_id.clone())
    };
    let fov = app.0.config.session.fov_deg;
    let png = blocking(move || render_png(&scene, pose, &goal, fov)).await?;
    Ok(image_response(PNG, png, q.rev.is_some()))
}

async fn gsm(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<GsmQuery>,
) -> Result<Response, ApiError> {
    let channel = q
        .channel
        .as_deref()
        .map(|c| c.parse::<Channel>().map_err(|e| ApiError::BadRequest(e.to_string())))
        .transpose()?;
    let snap = app.session(&id)?.lock().await.gsm_snapshot(q.rev)?;
    match channel {
        Some(ch) => {
            let png = blocking(move || snap.channel_png(ch).map_err(ApiError::internal)).await?;
            Ok(image_response(PNG, png, q.rev.is_some()))
        }
        None => Ok(image_response("application/octet-stream", snap.tensor.clone(), q.rev.is_some())),
    }
}

fn image_response(content_type: &'static str, body: Vec<u8>, pinned: bool) -> Response {
    if pinned {
        ([(header::CONTENT_TYPE, content_type), (header::CACHE_CONTROL, IMMUTABLE)], body).into_response()
    } else {
        ([(header::CONTENT_TYPE, content_type)], body).into_response()
    }
}
