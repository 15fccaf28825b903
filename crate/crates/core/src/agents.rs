//! Scripted policies: the goal-aware shortest-path oracle, a map-guided
//! landmark pilot, a random baseline, and log replay.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{
    self, apply_action, bearing_deg, horizontal_distance, yaw_error, CEILING_M, SUCCESS_RADIUS_M, VERTICAL_STEP_M,
};
use crate::geometry;
use crate::gsm::{extract_cues, phrase_matches, Channel, DescriptionCues, GsmError, GsmStack};
use crate::metrics::{path_length, MetricsError, Outcome, TrajectoryLog};
use crate::sim::{self, observe, Episode, Observation, RenderConfig, SessionState, SimConfig, SimError, StepInfo};
use crate::text;
use crate::worldmodel::{Category, Scene, SceneObject};
use crate::{Action, Point3, Pose};

/// Half the turn quantum.
pub const BEARING_TOLERANCE_DEG: f64 = 15.0;
/// Per-step stop probability of the random agent.
pub const RANDOM_STOP_P: f64 = 1.0 / 240.0;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("goal not reachable within {0} steps")]
    Unreachable(usize),
    #[error("no landmark in the semantic map")]
    NoLandmark,
    #[error("replay diverges from the log at pose {index}")]
    DivergenceDetected { index: usize, logged: Pose, replayed: Pose },
    #[error("replayed final distance {replayed} differs from logged {logged}")]
    OutcomeMismatch { logged: f64, replayed: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// What a policy sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    /// The map: landmark geometry and object annotations.
    pub scene: &'a Scene,
    /// `None` for agents that do not ask for observations.
    pub observation: Option<&'a Observation>,
    pub gsm: &'a GsmStack,
    pub cues: &'a DescriptionCues,
    pub observed_pose: Pose,
    /// Privileged; only the oracle reads it.
    pub true_pose: Pose,
    pub step_count: usize,
    /// Unexplored share of the current FOV before it was merged into the map.
    pub fov_unexplored: f64,
    /// Result of the previous step.
    pub last: Option<StepInfo>,
}

pub trait Agent {
    fn tag(&self) -> &'static str;

    /// Whether the runner renders and updates the semantic map every step.
    fn wants_observation(&self) -> bool {
        true
    }

    fn begin(&mut self, _scene: &Scene, _ep: &Episode, _gsm: &GsmStack, _cues: &DescriptionCues) {}

    fn act(&mut self, ctx: &PolicyContext) -> Action;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub actions: Vec<Action>,
    pub planned_length: f64,
}

fn steer(pose: &Pose, tx: f64, ty: f64) -> Action {
    let err = yaw_error(pose.yaw, bearing_deg(pose.x, pose.y, tx, ty));
    if err > BEARING_TOLERANCE_DEG {
        Action::TurnLeft
    } else if err < -BEARING_TOLERANCE_DEG {
        Action::TurnRight
    } else {
        Action::MoveForward
    }
}

/// Greedy oracle step: stop inside the success sphere, otherwise work on the
/// larger of the vertical residual (to `target_z`) and the horizontal one.
pub fn oracle_action(pose: &Pose, goal: &Point3, target_z: f64) -> Action {
    if geodesy::euclidean_distance(pose, goal) <= SUCCESS_RADIUS_M {
        return Action::Stop;
    }
    let h = horizontal_distance(pose, goal);
    let dz = target_z - pose.z;
    if dz.abs() > h && dz.abs() > VERTICAL_STEP_M / 2.0 {
        return if dz > 0.0 { Action::Ascend } else { Action::Descend };
    }
    steer(pose, goal.x, goal.y)
}

/// Kinematic shortest-path plan toward the goal's altitude, floored at `clearance`.
pub fn oracle_plan(start: &Pose, goal: &Point3, clearance: f64, max_steps: usize) -> Result<PlanResult, AgentError> {
    let target_z = goal.z.max(clearance).min(CEILING_M);
    let mut poses = vec![*start];
    let mut actions = Vec::new();
    loop {
        let p = *poses.last().expect("non-empty");
        let a = oracle_action(&p, goal, target_z);
        actions.push(a);
        if a == Action::Stop {
            break;
        }
        if actions.len() >= max_steps {
            return Err(AgentError::Unreachable(max_steps));
        }
        poses.push(apply_action(p, a));
    }
    Ok(PlanResult {
        actions,
        planned_length: path_length(&poses),
    })
}

/// Oracle executed in the simulator. Blocked forward moves trigger a climb
/// that lasts until the next forward move goes through.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    goal: Point3,
    clearance: f64,
    climbing: bool,
    last_action: Option<Action>,
}

impl OracleAgent {
    pub fn new(clearance: f64) -> Self {
        Self {
            goal: Point3::new(0.0, 0.0, 0.0),
            clearance,
            climbing: false,
            last_action: None,
        }
    }
}

impl Default for OracleAgent {
    fn default() -> Self {
        Self::new(sim::DEFAULT_CLEARANCE_M)
    }
}

impl Agent for OracleAgent {
    fn tag(&self) -> &'static str {
        "oracle"
    }

    fn wants_observation(&self) -> bool {
        false
    }

    fn begin(&mut self, _scene: &Scene, ep: &Episode, _gsm: &GsmStack, _cues: &DescriptionCues) {
        self.goal = ep.goal_center;
        self.climbing = false;
        self.last_action = None;
    }

    fn act(&mut self, ctx: &PolicyContext) -> Action {
        let pose = ctx.true_pose;
        let a = match (self.last_action, ctx.last) {
            (Some(Action::MoveForward), Some(info)) if info.blocked => {
                self.climbing = true;
                let ahead = apply_action(pose, Action::MoveForward);
                if !ctx.scene.contains_xy(ahead.x, ahead.y) || pose.z + VERTICAL_STEP_M > CEILING_M {
                    Action::TurnLeft
                } else {
                    Action::Ascend
                }
            }
            (last, _) => {
                if last == Some(Action::MoveForward) {
                    self.climbing = false;
                }
                let floor = ctx.scene.heightfield.sample_clamped(pose.x, pose.y) + self.clearance;
                let target = (self.goal.z + self.clearance).max(floor).min(CEILING_M);
                match oracle_action(&pose, &self.goal, target) {
                    Action::Descend if self.climbing => steer(&pose, self.goal.x, self.goal.y),
                    a => a,
                }
            }
        };
        self.last_action = Some(a);
        a
    }
}

/// One random-agent draw: stop with probability 1/240, else a uniform motion.
pub fn random_step(rng: &mut impl Rng) -> Action {
    if rng.random_bool(RANDOM_STOP_P) {
        Action::Stop
    } else {
        Action::MOTIONS[rng.random_range(0..Action::MOTIONS.len())]
    }
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn tag(&self) -> &'static str {
        "random"
    }

    fn wants_observation(&self) -> bool {
        false
    }

    fn act(&mut self, _ctx: &PolicyContext) -> Action {
        random_step(&mut self.rng)
    }
}

/// Feeds a recorded action sequence, then stops.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    actions: Vec<Action>,
    next: usize,
}

impl ReplayAgent {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, next: 0 }
    }
}

impl Agent for ReplayAgent {
    fn tag(&self) -> &'static str {
        "replay"
    }

    fn wants_observation(&self) -> bool {
        false
    }

    fn act(&mut self, _ctx: &PolicyContext) -> Action {
        let a = self.actions.get(self.next).copied().unwrap_or(Action::Stop);
        self.next += 1;
        a
    }
}

/// Tuned constants of the landmark pilot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotParams {
    /// Distance to the approach cell at which the search phase begins.
    pub approach_radius_m: f64,
    /// Horizontal radius around the chosen candidate inside which the pilot descends.
    pub stop_radius_m: f64,
    /// Height above the surface at or below which the pilot stops.
    pub stop_height_m: f64,
    /// Ascend while searching when more than this share of the FOV is unexplored.
    pub ascend_unexplored: f64,
    /// Cap for those climbs.
    pub search_ceiling_m: f64,
    /// Candidates farther than this from every cue landmark are ignored.
    pub candidate_radius_m: f64,
    /// Leg unit of the expanding-square sweep.
    pub sweep_leg_m: f64,
}

impl Default for PilotParams {
    fn default() -> Self {
        Self {
            approach_radius_m: 5.0,
            stop_radius_m: 10.0,
            stop_height_m: 15.0,
            ascend_unexplored: 0.8,
            search_ceiling_m: 150.0,
            candidate_radius_m: 60.0,
            sweep_leg_m: 80.0,
        }
    }
}

const ATTRIBUTE_MISS_PENALTY: f64 = 25.0;
const WRONG_SIDE_PENALTY: f64 = 40.0;
const SWEEP_LEGS: usize = 16;
const APPROACH_OVERSHOOT_M: f64 = 7.0;

/// Mean world position of the landmarks channel.
pub fn landmark_anchor(gsm: &GsmStack) -> Result<(f64, f64), AgentError> {
    let m = gsm.mask(Channel::Landmarks);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (c, r) in m.cells() {
        let (x, y) = gsm.cell_center_world(c, r);
        sx += x;
        sy += y;
        n += 1;
    }
    if n == 0 {
        return Err(AgentError::NoLandmark);
    }
    Ok((sx / n as f64, sy / n as f64))
}

/// World position of the landmarks-channel cell nearest to `(x, y)`.
pub fn nearest_landmark_cell(gsm: &GsmStack, x: f64, y: f64) -> Result<(f64, f64), AgentError> {
    gsm.mask(Channel::Landmarks)
        .cells()
        .map(|(c, r)| gsm.cell_center_world(c, r))
        .min_by(|a, b| (a.0 - x).hypot(a.1 - y).total_cmp(&(b.0 - x).hypot(b.1 - y)))
        .ok_or(AgentError::NoLandmark)
}

/// Waypoints of an expanding square around `center`: legs of 1, 1, 2, 2, 3, ... units
/// turning counterclockwise from east.
pub fn expanding_square(center: (f64, f64), unit: f64, legs: usize) -> Vec<(f64, f64)> {
    const DIRS: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
    let mut p = center;
    (0..legs)
        .map(|k| {
            let len = (k / 2 + 1) as f64 * unit;
            let d = DIRS[k % 4];
            p = (p.0 + d.0 * len, p.1 + d.1 * len);
            p
        })
        .collect()
}

fn compass_vector(tok: &str) -> Option<(f64, f64)> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Some(match tok {
        "north" => (0.0, 1.0),
        "south" => (0.0, -1.0),
        "east" => (1.0, 0.0),
        "west" => (-1.0, 0.0),
        "northeast" => (h, h),
        "northwest" => (-h, h),
        "southeast" => (h, -h),
        "southwest" => (-h, -h),
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    pos: (f64, f64),
    score: f64,
}

/// Operationalized human search strategy: head for the landmark named in the
/// description until over it, then go to the best
/// matching detection, sweeping the surroundings while there is none.
#[derive(Debug, Clone, Default)]
pub struct LandmarkPilot {
    pub params: PilotParams,
    anchor: (f64, f64),
    approach: (f64, f64),
    fallback: bool,
    rings: Vec<Vec<[f64; 2]>>,
    direction: Option<(f64, f64)>,
    searching: bool,
    sweep: Vec<(f64, f64)>,
    next_wp: usize,
    candidates: BTreeMap<String, Candidate>,
    committed: Option<(f64, f64)>,
    climbing: bool,
    last_action: Option<Action>,
}

impl LandmarkPilot {
    pub fn new(params: PilotParams) -> Self {
        Self { params, ..Default::default() }
    }

    /// True when the map held no landmark and the pilot searches around its start.
    pub fn in_fallback(&self) -> bool {
        self.fallback
    }

    fn score(&self, pos: (f64, f64), obj: &SceneObject, cues: &DescriptionCues, origin: (f64, f64)) -> Option<f64> {
        let attrs: Vec<&String> = cues
            .goal_phrases
            .iter()
            .flatten()
            .filter(|t| Category::from_keyword(t).is_none())
            .collect();
        let misses = attrs.iter().filter(|a| !obj.name_tokens.contains(a)).count();
        let mut score = misses as f64 * ATTRIBUTE_MISS_PENALTY;
        if self.rings.is_empty() {
            return Some(score + (pos.0 - origin.0).hypot(pos.1 - origin.1) / 10.0);
        }
        let p = [pos.0, pos.1];
        let (ring, d) = self
            .rings
            .iter()
            .map(|r| (r, geometry::distance_to_polygon(r, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        if d > self.params.candidate_radius_m {
            return None;
        }
        score += d;
        if let (Some(dir), true) = (self.direction, d > 0.0) {
            let (b, _) = geometry::nearest_boundary_point(ring, p);
            if (p[0] - b[0]) * dir.0 + (p[1] - b[1]) * dir.1 <= 0.0 {
                score += WRONG_SIDE_PENALTY;
            }
        }
        Some(score)
    }

    fn update_candidates(&mut self, ctx: &PolicyContext) {
        let Some(obs) = ctx.observation else {
            return;
        };
        let pg = ctx.gsm.mask(Channel::PotentialGoals);
        for v in &obs.visible_objects {
            if self.candidates.contains_key(&v.object_id) {
                continue;
            }
            let Some(o) = ctx.scene.object(&v.object_id) else {
                continue;
            };
            if !ctx.cues.goal_phrases.iter().any(|p| phrase_matches(p, o)) {
                continue;
            }
            let pos = (o.center.x + obs.pose_error.0, o.center.y + obs.pose_error.1);
            // only what the map channel recorded
            if !ctx.gsm.world_to_cell(pos.0, pos.1).is_some_and(|(c, r)| pg.get(c, r)) {
                continue;
            }
            if let Some(score) = self.score(pos, o, ctx.cues, self.anchor) {
                self.candidates.insert(v.object_id.clone(), Candidate { pos, score });
            }
        }
    }

    fn best_candidate(&self) -> Option<(f64, f64)> {
        self.candidates
            .values()
            .min_by(|a, b| a.score.total_cmp(&b.score))
            .map(|c| c.pos)
    }

    fn decide(&mut self, ctx: &PolicyContext) -> Action {
        let pose = ctx.observed_pose;
        if let (Some(Action::MoveForward), Some(info)) = (self.last_action, ctx.last) {
            if info.blocked {
                self.climbing = true;
                if pose.z + VERTICAL_STEP_M <= CEILING_M {
                    return Action::Ascend;
                }
            } else {
                self.climbing = false;
            }
        }
        self.update_candidates(ctx);
        if !self.searching {
            let near = (pose.x - self.approach.0).hypot(pose.y - self.approach.1) <= self.params.approach_radius_m;
            let over = self.rings.iter().any(|r| geometry::contains_point(r, [pose.x, pose.y]));
            if !(near || over) {
                return steer(&pose, self.approach.0, self.approach.1);
            }
            self.searching = true;
        }

        let target = self.committed.or_else(|| self.best_candidate());
        if let Some(t) = target {
            if (pose.x - t.0).hypot(pose.y - t.1) <= self.params.stop_radius_m {
                self.committed = Some(t);
                let height = ctx.observation.map(|o| o.center_depth()).unwrap_or(pose.z);
                return if height <= self.params.stop_height_m {
                    Action::Stop
                } else {
                    Action::Descend
                };
            }
            return steer(&pose, t.0, t.1);
        }

        if ctx.fov_unexplored > self.params.ascend_unexplored
            && pose.z + VERTICAL_STEP_M <= self.params.search_ceiling_m
            && !self.climbing
        {
            return Action::Ascend;
        }
        let reach = self.params.sweep_leg_m / 4.0;
        while self.next_wp < self.sweep.len() {
            let wp = self.sweep[self.next_wp];
            if (pose.x - wp.0).hypot(pose.y - wp.1) > reach {
                return steer(&pose, wp.0, wp.1);
            }
            self.next_wp += 1;
        }
        // sweep exhausted: start over
        self.next_wp = 0;
        steer(&pose, self.anchor.0, self.anchor.1)
    }
}

impl Agent for LandmarkPilot {
    fn tag(&self) -> &'static str {
        "landmark-pilot"
    }

    fn begin(&mut self, scene: &Scene, ep: &Episode, gsm: &GsmStack, cues: &DescriptionCues) {
        let params = self.params;
        *self = Self::new(params);
        match landmark_anchor(gsm) {
            Ok(a) => {
                self.anchor = a;
                let (sx, sy) = (ep.start_pose.x, ep.start_pose.y);
                let n = nearest_landmark_cell(gsm, sx, sy).unwrap_or(a);
                // aim past the edge so narrow streets are crossed, not grazed
                let d = (n.0 - sx).hypot(n.1 - sy);
                self.approach = if d > 0.0 {
                    let k = (d + APPROACH_OVERSHOOT_M) / d;
                    (sx + (n.0 - sx) * k, sy + (n.1 - sy) * k)
                } else {
                    n
                };
                self.rings = cues
                    .landmark_names
                    .iter()
                    .filter_map(|n| scene.landmark(n))
                    .map(|l| scene.landmark_world_ring(l))
                    .collect();
            }
            Err(_) => {
                self.fallback = true;
                self.anchor = (ep.start_pose.x, ep.start_pose.y);
                self.searching = true;
            }
        }
        self.direction = text::tokenize(&ep.description).iter().find_map(|t| compass_vector(t));
        self.sweep = expanding_square(self.anchor, params.sweep_leg_m, SWEEP_LEGS);
    }

    fn act(&mut self, ctx: &PolicyContext) -> Action {
        let a = self.decide(ctx);
        self.last_action = Some(a);
        a
    }
}

/// Settings shared by every episode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub sim: SimConfig,
    pub render: RenderConfig,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            render: RenderConfig::minimal(90.0),
            seed: 0,
        }
    }
}

/// Stable per-episode seed (FNV-1a over the id, mixed with the run seed).
pub fn episode_seed(seed: u64, episode_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in episode_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Runs one agent through one episode and records the trajectory. `scene` is
/// the scene as the agent experiences it (possibly flooded).
pub fn run_episode(agent: &mut dyn Agent, scene: &Scene, ep: &Episode, opts: &RunOptions) -> Result<TrajectoryLog, AgentError> {
    let cues = match extract_cues(&ep.description, scene) {
        Ok(c) | Err(GsmError::NoLandmarkFound(c)) => c,
        Err(_) => DescriptionCues::default(),
    };
    let mut gsm = GsmStack::for_episode(scene, &cues);
    let mut state = SessionState::for_episode(ep, episode_seed(opts.seed, &ep.id));
    agent.begin(scene, ep, &gsm, &cues);
    let mut actions = Vec::new();
    let mut last = None;
    while !state.done {
        let obs = if agent.wants_observation() {
            let obs = observe(scene, &state, &opts.render, Some(&ep.goal_object_id))?;
            Some(obs)
        } else {
            None
        };
        let mut fov_unexplored = 0.0;
        if let Some(o) = &obs {
            fov_unexplored = gsm.unexplored_fraction(&o.observed_pose, opts.render.fov_deg);
            gsm.update_fov(&o.observed_pose, opts.render.fov_deg);
            gsm.update_detections(o, scene, &cues);
        }
        let ctx = PolicyContext {
            scene,
            observation: obs.as_ref(),
            gsm: &gsm,
            cues: &cues,
            observed_pose: state.observed_pose,
            true_pose: state.pose,
            step_count: state.step_count,
            fov_unexplored,
            last,
        };
        let a = agent.act(&ctx);
        last = Some(sim::step(&mut state, scene, a, &opts.sim)?);
        actions.push(a);
    }
    Ok(log_from_state(agent.tag(), ep, actions, state))
}

/// Log of a finished (or abandoned) session under agent `tag`.
pub fn log_from_state(tag: &str, ep: &Episode, actions: Vec<Action>, state: SessionState) -> TrajectoryLog {
    let fin = state.pose;
    TrajectoryLog {
        trajectory_id: format!("{tag}-{}", ep.id),
        episode_id: ep.id.clone(),
        outcome: Outcome {
            stopped: actions.last() == Some(&Action::Stop),
            final_distance: geodesy::euclidean_distance(&fin, &ep.goal_center),
        },
        wall_time: actions.len() as f64,
        actions,
        poses: state.visited,
        agent_tag: tag.to_string(),
        blocked: state.blocked,
    }
}

/// Re-executes a log's actions (noise off) and checks every pose bit for bit.
/// Returns the replayed poses.
pub fn replay(log: &TrajectoryLog, ep: &Episode, scene: &Scene, cfg: &SimConfig) -> Result<Vec<Pose>, AgentError> {
    if log.poses.len() != log.actions.len() + 1 {
        return Err(MetricsError::LengthMismatch {
            episode: log.episode_id.clone(),
            actions: log.actions.len(),
            poses: log.poses.len(),
        }
        .into());
    }
    let cfg = SimConfig {
        noise: sim::NoiseSpec::default(),
        max_steps: cfg.max_steps.max(log.actions.len()),
        ..*cfg
    };
    let mut state = SessionState::for_episode(ep, 0);
    let diverged = |index: usize, replayed: Pose| AgentError::DivergenceDetected {
        index,
        logged: log.poses[index],
        replayed,
    };
    if log.poses[0] != state.pose {
        return Err(diverged(0, state.pose));
    }
    for (i, &a) in log.actions.iter().enumerate() {
        if state.done {
            return Err(diverged(i + 1, state.pose));
        }
        sim::step(&mut state, scene, a, &cfg)?;
        if log.poses[i + 1] != state.pose {
            return Err(diverged(i + 1, state.pose));
        }
    }
    let replayed = geodesy::euclidean_distance(&state.pose, &ep.goal_center);
    if (replayed - log.outcome.final_distance).abs() > 1e-9 {
        return Err(AgentError::OutcomeMismatch {
            logged: log.outcome.final_distance,
            replayed,
        });
    }
    Ok(state.visited)
}
