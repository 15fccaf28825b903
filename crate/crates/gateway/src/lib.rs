//! HTTP session service: a human flies the simulator one action per request,
//! with rollback, map and render resources, and a submit that persists the
//! trajectory to the corpus.

mod routes;
pub mod session;
mod writer;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex, RwLock};

use aeronav_core::datastore::{self, Corpus, DatastoreError};
use aeronav_core::sim::{apply_flood, Episode, FloodSpec, SimError};
use aeronav_core::worldmodel::{io as scene_io, Scene, WorldError};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;
use tokio::sync::Mutex;

pub use routes::router;
pub use session::{RenderMode, Session, SessionConfig, StateView};
pub use writer::LogWriter;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_SESSIONS: usize = 64;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Gone(String),
    #[error("session limit of {0} reached")]
    TooManySessions(usize),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::Internal(e.to_string())
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Gone(_) => StatusCode::GONE,
            ApiError::TooManySessions(_) => StatusCode::TOO_MANY_REQUESTS,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Datastore(#[from] DatastoreError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid environment variable {name}: {value}")]
    Env { name: &'static str, value: String },
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub corpus_dir: PathBuf,
    /// Defaults to the scene directory named in the corpus manifest.
    pub scene_dir: Option<PathBuf>,
    pub session: SessionConfig,
    pub flood: Option<FloodSpec>,
    pub max_sessions: usize,
}

impl GatewayConfig {
    pub fn new(corpus_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus_dir: corpus_dir.into(),
            scene_dir: None,
            session: SessionConfig::default(),
            flood: None,
            max_sessions: DEFAULT_MAX_SESSIONS,
        }
    }

    /// Reads `CORPUS_DIR` (default `corpus`), `SCENE_DIR` and `PORT`.
    pub fn from_env() -> Result<(Self, u16), GatewayError> {
        let mut cfg = Self::new(std::env::var("CORPUS_DIR").unwrap_or_else(|_| "corpus".into()));
        cfg.scene_dir = std::env::var_os("SCENE_DIR").map(PathBuf::from);
        let port = match std::env::var("PORT") {
            Ok(v) => v.parse().map_err(|_| GatewayError::Env { name: "PORT", value: v })?,
            Err(_) => DEFAULT_PORT,
        };
        Ok((cfg, port))
    }
}

pub(crate) struct Inner {
    pub config: GatewayConfig,
    pub scenes: HashMap<String, Arc<Scene>>,
    pub episodes: HashMap<String, Episode>,
    pub by_scene: BTreeMap<String, Vec<String>>,
    pub sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    pub submitted: StdMutex<HashSet<String>>,
    pub writer: LogWriter,
}

/// Shared, cheaply clonable application state.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    /// Loads scenes and episodes and starts the log writer. Must run inside a
    /// tokio runtime.
    pub fn load(config: GatewayConfig) -> Result<Self, GatewayError> {
        let (corpus, _) = Corpus::load(&config.corpus_dir)?;
        let scene_dir = match &config.scene_dir {
            Some(d) => d.clone(),
            None => datastore::scene_dir(&config.corpus_dir)?,
        };
        let mut scenes = HashMap::new();
        for s in scene_io::load_scene_dir(&scene_dir)? {
            let s = match &config.flood {
                Some(f) => apply_flood(&s, f)?,
                None => s,
            };
            scenes.insert(s.id.clone(), Arc::new(s));
        }
        let mut by_scene: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for ep in &corpus.episodes {
            by_scene.entry(ep.scene_id.clone()).or_default().push(ep.id.clone());
        }
        let episodes = corpus.episodes.into_iter().map(|e| (e.id.clone(), e)).collect();
        let writer = LogWriter::spawn(config.corpus_dir.clone());
        Ok(Self(Arc::new(Inner {
            config,
            scenes,
            episodes,
            by_scene,
            sessions: RwLock::new(HashMap::new()),
            submitted: StdMutex::new(HashSet::new()),
            writer,
        })))
    }

    pub fn active_sessions(&self) -> usize {
        self.0.sessions.read().expect("session table lock").len()
    }
}

/// Binds `0.0.0.0:port` and serves until the process ends.
pub async fn serve(state: AppState, port: u16) -> Result<(), GatewayError> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}
