use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use aeronav_core::agents::{episode_seed, log_from_state};
use aeronav_core::gsm::{channel_png_from_export, extract_cues, Channel, DescriptionCues, GsmError, GsmStack, EXPORT_SIZE};
use aeronav_core::metrics::TrajectoryLog;
use aeronav_core::sim::{self, observe, rgb_to_png, Episode, RenderConfig, SessionState, SimConfig};
use aeronav_core::worldmodel::Scene;
use aeronav_core::{Action, Pose};
use serde::{Deserialize, Serialize};

use crate::ApiError;

pub const HUMAN_TAG: &str = "human";
pub const OBLIQUE_PITCH_DEG: f64 = -45.0;
pub const TOPDOWN_PITCH_DEG: f64 = -90.0;
const GSM_PLANE: usize = EXPORT_SIZE * EXPORT_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub sim: SimConfig,
    pub fov_deg: f64,
    pub undo_limit: usize,
    /// Number of GSM revisions kept for re-fetching.
    pub gsm_history: usize,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            fov_deg: 90.0,
            undo_limit: 50,
            gsm_history: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Topdown,
    Oblique,
}

impl RenderMode {
    fn pitch(self) -> f64 {
        match self {
            RenderMode::Topdown => TOPDOWN_PITCH_DEG,
            RenderMode::Oblique => OBLIQUE_PITCH_DEG,
        }
    }
}

/// What a client may see of the session: the observed pose only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub pose: Pose,
    pub step_count: usize,
    pub done: bool,
    /// The last forward move hit a building.
    pub blocked: bool,
    pub revision: u64,
}

/// Stacked GSM export of one revision: a JSON header line then five planes.
#[derive(Debug)]
pub struct GsmSnapshot {
    pub tensor: Vec<u8>,
    planes_at: usize,
}

impl GsmSnapshot {
    fn capture(gsm: &GsmStack) -> Result<Self, GsmError> {
        let mut tensor = Vec::new();
        gsm.write_tensor(&mut tensor)?;
        let planes_at = tensor.len() - Channel::ALL.len() * GSM_PLANE;
        Ok(Self { tensor, planes_at })
    }

    pub fn channel_png(&self, ch: Channel) -> Result<Vec<u8>, GsmError> {
        let k = Channel::ALL.iter().position(|c| *c == ch).expect("channel listed in ALL");
        let at = self.planes_at + k * GSM_PLANE;
        channel_png_from_export(&self.tensor[at..at + GSM_PLANE])
    }
}

pub struct Session {
    pub id: String,
    pub scene: Arc<Scene>,
    pub episode: Episode,
    cfg: SessionConfig,
    cues: DescriptionCues,
    state: SessionState,
    actions: Vec<Action>,
    gsm: GsmStack,
    undo: VecDeque<(SessionState, usize)>,
    revision: u64,
    /// True pose at each revision, for renders.
    rev_poses: Vec<Pose>,
    gsm_revs: VecDeque<(u64, Arc<GsmSnapshot>)>,
    last_blocked: bool,
    pub submitted: bool,
    created: Instant,
}

impl Session {
    pub fn new(id: String, scene: Arc<Scene>, episode: Episode, cfg: SessionConfig) -> Result<Self, ApiError> {
        let cues = match extract_cues(&episode.description, &scene) {
            Ok(c) | Err(GsmError::NoLandmarkFound(c)) => c,
            Err(_) => DescriptionCues::default(),
        };
        let gsm = GsmStack::for_episode(&scene, &cues);
        let state = SessionState::for_episode(&episode, episode_seed(cfg.seed, &id));
        let mut s = Self {
            rev_poses: vec![state.pose],
            id,
            scene,
            episode,
            cfg,
            cues,
            state,
            actions: Vec::new(),
            gsm,
            undo: VecDeque::new(),
            revision: 0,
            gsm_revs: VecDeque::new(),
            last_blocked: false,
            submitted: false,
            created: Instant::now(),
        };
        s.perceive()?;
        s.snapshot_gsm()?;
        Ok(s)
    }

    pub fn view(&self) -> StateView {
        StateView {
            pose: self.state.observed_pose,
            step_count: self.state.step_count,
            done: self.state.done,
            blocked: self.last_blocked,
            revision: self.revision,
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len()
    }

    pub fn gsm(&self) -> &GsmStack {
        &self.gsm
    }

    pub fn act(&mut self, a: Action) -> Result<StateView, ApiError> {
        if self.submitted {
            return Err(ApiError::Conflict("session already submitted".into()));
        }
        if self.state.done {
            return Err(ApiError::Conflict("session is done".into()));
        }
        let before = (self.state.clone(), self.actions.len());
        let info = sim::step(&mut self.state, &self.scene, a, &self.cfg.sim).map_err(ApiError::internal)?;
        if self.undo.len() == self.cfg.undo_limit {
            self.undo.pop_front();
        }
        if self.cfg.undo_limit > 0 {
            self.undo.push_back(before);
        }
        self.actions.push(a);
        self.last_blocked = info.blocked;
        self.perceive()?;
        self.advance()?;
        Ok(self.view())
    }

    /// Restores the pose and step count before the last action. Map knowledge
    /// gathered since then is kept.
    pub fn rollback(&mut self) -> Result<StateView, ApiError> {
        if self.submitted {
            return Err(ApiError::Conflict("session already submitted".into()));
        }
        let (state, n) = self
            .undo
            .pop_back()
            .ok_or_else(|| ApiError::Conflict("nothing to roll back".into()))?;
        self.state = state;
        self.actions.truncate(n);
        self.last_blocked = false;
        self.advance()?;
        Ok(self.view())
    }

    /// The trajectory as it stands, tagged as a human demonstration.
    pub fn finish(&self) -> TrajectoryLog {
        let mut log = log_from_state(HUMAN_TAG, &self.episode, self.actions.clone(), self.state.clone());
        log.trajectory_id = format!("{HUMAN_TAG}-{}", self.id);
        log.wall_time = self.created.elapsed().as_secs_f64();
        log
    }

    pub fn render_target(&self, rev: Option<u64>, mode: RenderMode) -> Result<Pose, ApiError> {
        let rev = rev.unwrap_or(self.revision);
        let mut p = *self
            .rev_poses
            .get(rev as usize)
            .ok_or_else(|| ApiError::NotFound(format!("revision {rev}")))?;
        p.pitch = mode.pitch();
        Ok(p)
    }

    pub fn gsm_snapshot(&self, rev: Option<u64>) -> Result<Arc<GsmSnapshot>, ApiError> {
        let rev = rev.unwrap_or(self.revision);
        if rev > self.revision {
            return Err(ApiError::NotFound(format!("revision {rev}")));
        }
        self.gsm_revs
            .iter()
            .find(|(r, _)| *r == rev)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| ApiError::Gone(format!("map revision {rev} is no longer kept")))
    }

    fn perceive(&mut self) -> Result<(), ApiError> {
        let rc = RenderConfig::minimal(self.cfg.fov_deg);
        let obs = observe(&self.scene, &self.state, &rc, Some(&self.episode.goal_object_id)).map_err(ApiError::internal)?;
        self.gsm.update_fov(&obs.observed_pose, self.cfg.fov_deg);
        self.gsm.update_detections(&obs, &self.scene, &self.cues);
        Ok(())
    }

    fn advance(&mut self) -> Result<(), ApiError> {
        self.revision += 1;
        self.rev_poses.push(self.state.pose);
        self.snapshot_gsm()
    }

    fn snapshot_gsm(&mut self) -> Result<(), ApiError> {
        let snap = GsmSnapshot::capture(&self.gsm).map_err(ApiError::internal)?;
        if self.gsm_revs.len() >= self.cfg.gsm_history.max(1) {
            self.gsm_revs.pop_front();
        }
        self.gsm_revs.push_back((self.revision, Arc::new(snap)));
        Ok(())
    }
}

/// PNG of the scene from `pose` (true pose, pitch set by the render mode).
pub fn render_png(scene: &Scene, pose: Pose, goal_id: &str, fov_deg: f64) -> Result<Vec<u8>, ApiError> {
    let state = SessionState::new(pose, 0);
    let rc = RenderConfig { fov_deg, ..RenderConfig::default() };
    let obs = observe(scene, &state, &rc, Some(goal_id)).map_err(ApiError::internal)?;
    rgb_to_png(&obs.rgb).map_err(ApiError::internal)
}
