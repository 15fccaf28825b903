//! Episode lifecycle: start sampling, stepping with terrain clearance and
//! collision no-ops, pose noise, success checks, the flood transform and
//! step transcripts.

mod render;

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, apply_action, CEILING_M, SUCCESS_RADIUS_M};
use crate::worldmodel::{Category, Scene, WorldError, MAX_TERRAIN_M};
use crate::{Action, Point3, Pose};

pub use render::{
    depth_to_pfm, observe, render, rgb_to_png, Observation, RenderConfig, VisibleObject, COLOR_WATER,
};

pub const DEFAULT_CLEARANCE_M: f64 = 5.0;
pub const DEFAULT_MAX_STEPS: usize = 500;
pub const START_MIN_M: f64 = 50.0;
pub const START_MAX_M: f64 = 500.0;
pub const START_ALT_M: (f64, f64) = (100.0, 150.0);
const START_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("session is already done")]
    SessionDone,
    #[error("point ({x:.2}, {y:.2}) is outside the scene extent")]
    OutOfExtent { x: f64, y: f64 },
    #[error("no valid start pose within {START_MAX_M} m of the goal")]
    NoValidStart,
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image encoding: {0}")]
    Image(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValSeen,
    ValUnseen,
    TestUnseen,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::ValSeen, Split::ValUnseen, Split::TestUnseen];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValSeen => "val_seen",
            Split::ValUnseen => "val_unseen",
            Split::TestUnseen => "test_unseen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub scene_id: String,
    pub description: String,
    pub goal_center: Point3,
    pub goal_object_id: String,
    pub goal_category: Category,
    pub start_pose: Pose,
    pub split: Split,
}

/// Per-step Gaussian perturbation of the observed horizontal position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub enabled: bool,
    pub sigma: f64,
    pub clip: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma: 50.0,
            clip: 100.0,
        }
    }
}

impl NoiseSpec {
    pub fn on(sigma: f64, clip: f64) -> Self {
        Self {
            enabled: true,
            sigma,
            clip,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma >= 0.0 && self.clip >= self.sigma) {
            return Err(SimError::InvalidSpec(format!(
                "noise needs clip >= sigma >= 0 (sigma {}, clip {})",
                self.sigma, self.clip
            )));
        }
        Ok(())
    }

    /// One clipped draw.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if !self.enabled || self.sigma == 0.0 {
            return 0.0;
        }
        let n = Normal::new(0.0, self.sigma).expect("sigma validated");
        n.sample(rng).clamp(-self.clip, self.clip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloodSpec {
    pub water_level: f64,
}

impl FloodSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=MAX_TERRAIN_M).contains(&self.water_level) {
            return Err(SimError::InvalidSpec(format!(
                "water level {} outside [0, {MAX_TERRAIN_M}]",
                self.water_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub clearance: f64,
    pub max_steps: usize,
    pub noise: NoiseSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            clearance: DEFAULT_CLEARANCE_M,
            max_steps: DEFAULT_MAX_STEPS,
            noise: NoiseSpec::default(),
        }
    }
}

/// Mutable state of one navigation session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub pose: Pose,
    pub observed_pose: Pose,
    pub step_count: usize,
    pub done: bool,
    pub visited: Vec<Pose>,
    /// Step indices (0-based, into the action sequence) whose forward move was blocked.
    pub blocked: Vec<usize>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    /// The action was a forward move into a building and had no effect.
    pub blocked: bool,
    pub done: bool,
}

impl SessionState {
    /// Session at `start`; `seed` drives the pose-noise stream.
    pub fn new(start: Pose, seed: u64) -> Self {
        Self {
            pose: start,
            observed_pose: start,
            step_count: 0,
            done: false,
            visited: vec![start],
            blocked: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_episode(ep: &Episode, seed: u64) -> Self {
        Self::new(ep.start_pose, seed)
    }
}

/// Advances one action. Forward moves into a building (or off the map) become
/// flagged no-ops; otherwise altitude is raised to the terrain clearance floor.
pub fn step(state: &mut SessionState, scene: &Scene, a: Action, cfg: &SimConfig) -> Result<StepInfo, SimError> {
    if state.done {
        return Err(SimError::SessionDone);
    }
    let prev = state.pose;
    let mut next = apply_action(prev, a);
    let mut blocked = false;
    if a == Action::MoveForward {
        blocked = match scene.heightfield.sample(next.x, next.y) {
            None => true,
            Some(h) => scene
                .building_at(next.x, next.y)
                .is_some_and(|b| next.z < b.center.z.max(h) + cfg.clearance),
        };
    }
    if blocked {
        next = prev;
        state.blocked.push(state.step_count);
    } else {
        let floor = scene.heightfield.sample_clamped(next.x, next.y) + cfg.clearance;
        if next.z < floor {
            next.z = floor.min(CEILING_M);
        }
    }
    state.pose = next;
    state.observed_pose = next;
    if cfg.noise.enabled {
        state.observed_pose.x += cfg.noise.sample(&mut state.rng);
        state.observed_pose.y += cfg.noise.sample(&mut state.rng);
    }
    state.step_count += 1;
    state.visited.push(next);
    state.done = a == Action::Stop || state.step_count >= cfg.max_steps;
    Ok(StepInfo {
        blocked,
        done: state.done,
    })
}

pub fn is_success(stop: &Pose, goal: &Point3) -> bool {
    geodesy::euclidean_distance(stop, goal) <= SUCCESS_RADIUS_M
}

/// Samples a start pose uniformly over the in-extent annulus of radii 50 and
/// 500 m around the goal, at 100 to 150 m altitude and a lattice yaw.
pub fn sample_start(scene: &Scene, goal: &Point3, pitch: f64, clearance: f64, rng: &mut impl Rng) -> Result<Pose, SimError> {
    if !scene.contains_xy(goal.x, goal.y) {
        return Err(SimError::OutOfExtent { x: goal.x, y: goal.y });
    }
    let (r2lo, r2hi) = (START_MIN_M * START_MIN_M, START_MAX_M * START_MAX_M);
    for _ in 0..START_ATTEMPTS {
        let r = rng.random_range(r2lo..=r2hi).sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let z = rng.random_range(START_ALT_M.0..=START_ALT_M.1);
        let yaw = 30.0 * rng.random_range(0..12) as f64;
        let (x, y) = (goal.x + r * theta.cos(), goal.y + r * theta.sin());
        let Some(h) = scene.heightfield.sample(x, y) else {
            continue;
        };
        if h + clearance <= z {
            return Ok(Pose::new(x, y, z, pitch, yaw));
        }
    }
    Err(SimError::NoValidStart)
}

/// Fraction of `points` whose surface lies strictly below `level`.
fn submerged_fraction(scene: &Scene, points: &[[f64; 2]], level: f64) -> f64 {
    let under = points
        .iter()
        .filter(|p| scene.heightfield.sample_clamped(p[0], p[1]) < level)
        .count();
    under as f64 / points.len() as f64
}

/// Derived scene flooded to `f.water_level`: objects and landmarks with at least
/// half their footprint below water are hidden. A zero level is the identity.
pub fn apply_flood(scene: &Scene, f: &FloodSpec) -> Result<Scene, SimError> {
    f.validate()?;
    let mut out = scene.clone();
    if f.water_level <= 0.0 {
        return Ok(out);
    }
    let level = f.water_level;
    let cell = scene.heightfield.cell_size();
    out.water_level = Some(level);
    out.hidden_objects = scene
        .objects
        .iter()
        .filter(|o| {
            let pts = o.footprint.sample_nodes(cell, [o.center.x, o.center.y]);
            submerged_fraction(scene, &pts, level) >= 0.5
        })
        .map(|o| o.id.clone())
        .collect::<BTreeSet<_>>();
    out.hidden_landmarks = scene
        .landmarks
        .iter()
        .filter(|l| {
            let ring = scene.landmark_world_ring(l);
            let fp = crate::worldmodel::Footprint::Polygon { ring };
            let c = crate::geometry::polygon_centroid(&scene.landmark_world_ring(l));
            let pts = fp.sample_nodes(cell, c);
            submerged_fraction(scene, &pts, level) >= 0.5
        })
        .map(|l| l.name.clone())
        .collect();
    Ok(out)
}

/// One line of a step transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub step: usize,
    pub action: Action,
    pub observed_pose: Pose,
    pub blocked: bool,
    pub done: bool,
}

pub fn write_transcript_line(w: &mut impl Write, line: &TranscriptLine) -> Result<(), SimError> {
    serde_json::to_writer(&mut *w, line).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::fixtures::small_scene;
    use crate::worldmodel::{Heightfield, Landmark, SceneObject};
    use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

    fn pose(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
        Pose::new(x, y, z, -90.0, yaw)
    }

    #[test]
    fn noise_disabled_observed_equals_true() {
        let s = small_scene();
        let mut st = SessionState::new(pose(50.0, 50.0, 100.0, 0.0), 1);
        for a in [Action::MoveForward, Action::TurnLeft, Action::Ascend] {
            step(&mut st, &s, a, &SimConfig::default()).unwrap();
            assert_eq!(st.observed_pose, st.pose);
        }
        assert_eq!(st.visited.len(), st.step_count + 1);
    }

    #[test]
    fn stop_sets_done_and_keeps_pose() {
        let s = small_scene();
        let p = pose(50.0, 50.0, 100.0, 0.0);
        let mut st = SessionState::new(p, 1);
        let info = step(&mut st, &s, Action::Stop, &SimConfig::default()).unwrap();
        assert!(info.done && st.done);
        assert_eq!(st.pose, p);
        assert!(matches!(step(&mut st, &s, Action::Ascend, &SimConfig::default()), Err(SimError::SessionDone)));
    }

    #[test]
    fn step_limit_ends_session() {
        let s = small_scene();
        let cfg = SimConfig {
            max_steps: 3,
            ..Default::default()
        };
        let mut st = SessionState::new(pose(50.0, 50.0, 100.0, 0.0), 1);
        for _ in 0..3 {
            step(&mut st, &s, Action::TurnLeft, &cfg).unwrap();
        }
        assert!(st.done);
    }

    #[test]
    fn clearance_floor_and_building_block() {
        let s = small_scene();
        let cfg = SimConfig::default();
        let mut st = SessionState::new(pose(20.0, 20.0, 6.0, 0.0), 1);
        step(&mut st, &s, Action::Descend, &cfg).unwrap();
        assert_eq!(st.pose.z, 5.0);
        // building bldg-0 spans 130..160 with a 30 m roof; approach from the west at 20 m
        let mut st = SessionState::new(pose(127.0, 145.0, 20.0, 0.0), 1);
        let info = step(&mut st, &s, Action::MoveForward, &cfg).unwrap();
        assert!(info.blocked);
        assert_eq!(st.pose.x, 127.0);
        assert_eq!(st.blocked, vec![0]);
        // above roof plus clearance the move goes through
        let mut st = SessionState::new(pose(127.0, 145.0, 36.0, 0.0), 1);
        assert!(!step(&mut st, &s, Action::MoveForward, &cfg).unwrap().blocked);
        assert_eq!(st.pose.x, 132.0);
    }

    #[test]
    fn leaving_the_map_is_a_noop() {
        let s = small_scene();
        let mut st = SessionState::new(pose(198.0, 50.0, 100.0, 0.0), 1);
        assert!(step(&mut st, &s, Action::MoveForward, &SimConfig::default()).unwrap().blocked);
    }

    /// Standard deviation of N(0, sigma) censored at +-clip, from the closed form.
    fn censored_std(sigma: f64, clip: f64) -> f64 {
        let n = StatNormal::new(0.0, 1.0).unwrap();
        let c = clip / sigma;
        let var = (2.0 * n.cdf(c) - 1.0) - 2.0 * c * n.pdf(c) + 2.0 * c * c * (1.0 - n.cdf(c));
        sigma * var.sqrt()
    }

    #[test]
    fn noise_matches_clipped_normal_moments() {
        let s = small_scene();
        let cfg = SimConfig {
            noise: NoiseSpec::on(50.0, 100.0),
            max_steps: usize::MAX,
            ..Default::default()
        };
        let mut st = SessionState::new(pose(100.0, 20.0, 100.0, 0.0), 9);
        let mut dx = Vec::new();
        for _ in 0..10_000 {
            step(&mut st, &s, Action::TurnLeft, &cfg).unwrap();
            let (ex, ey) = (st.observed_pose.x - st.pose.x, st.observed_pose.y - st.pose.y);
            assert!(ex.abs() <= 100.0 && ey.abs() <= 100.0);
            assert_eq!(st.observed_pose.z, st.pose.z);
            dx.push(ex);
            dx.push(ey);
        }
        let n = dx.len() as f64;
        let mean = dx.iter().sum::<f64>() / n;
        let sd = (dx.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let want = censored_std(50.0, 100.0);
        assert!((sd - want).abs() / want < 0.10, "sd {sd} vs {want}");
        assert!((want - 47.97).abs() < 0.01);
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::on(50.0, 10.0).validate().is_err());
        assert!(NoiseSpec::on(50.0, 100.0).validate().is_ok());
    }

    #[test]
    fn success_boundary_inclusive() {
        let g = Point3::new(0.0, 0.0, 0.0);
        assert!(is_success(&Pose::new(0.0, 0.0, 0.0, 0.0, 0.0), &g));
        assert!(is_success(&Pose::new(20.0, 0.0, 0.0, 0.0, 0.0), &g));
        assert!(!is_success(&Pose::new(20.1, 0.0, 0.0, 0.0, 0.0), &g));
    }

    fn big_flat() -> Scene {
        let hf = Heightfield::flat(601, 601, 2.0, 0.0);
        let lm = vec![crate::worldmodel::fixtures::landmark("Mill Road", [0.0, 0.0], [1200.0, 14.0], "street")];
        Scene::new("flat", hf, vec![], lm, crate::worldmodel::fixtures::transform(1200.0, 1200.0)).unwrap()
    }

    #[test]
    fn start_sampling_bounds_and_determinism() {
        let s = big_flat();
        let goal = Point3::new(600.0, 600.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let p = sample_start(&s, &goal, -90.0, 5.0, &mut rng).unwrap();
            let d = geodesy::horizontal_distance(&p, &goal);
            assert!((START_MIN_M..=START_MAX_M).contains(&d));
            assert!((100.0..=150.0).contains(&p.z));
            assert_eq!(p.yaw % 30.0, 0.0);
        }
        let a = sample_start(&s, &goal, -90.0, 5.0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_start(&s, &goal, -90.0, 5.0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn start_sampling_rejects_outside_goal() {
        let s = big_flat();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            sample_start(&s, &Point3::new(-5.0, 0.0, 0.0), -90.0, 5.0, &mut rng),
            Err(SimError::OutOfExtent { .. })
        ));
    }

    fn terraced() -> Scene {
        // terrain rises 1 m per 10 m eastward; parks and cars spread over it
        let cols = 201;
        let data: Vec<f32> = (0..cols * cols).map(|i| ((i % cols) as f32 * 2.0) / 10.0).collect();
        let hf = Heightfield::new(cols, cols, 2.0, data).unwrap();
        let mut objects: Vec<SceneObject> = Vec::new();
        let mut landmarks: Vec<Landmark> = Vec::new();
        for k in 0..8 {
            let x0 = 10.0 + 45.0 * k as f64;
            objects.push(crate::worldmodel::fixtures::object(
                &format!("g{k}"),
                Category::Ground,
                &["green", "trees"],
                [x0, 20.0],
                [x0 + 30.0, 50.0],
                0.0,
            ));
            objects.push(crate::worldmodel::fixtures::object(
                &format!("c{k}"),
                Category::Car,
                &["red", "stripes"],
                [x0, 100.0],
                [x0 + 4.6, 101.9],
                1.5,
            ));
            landmarks.push(crate::worldmodel::fixtures::landmark(
                &format!("Lane {k}"),
                [x0, 200.0],
                [x0 + 12.0, 390.0],
                "street",
            ));
        }
        Scene::new("terraced", hf, objects, landmarks, crate::worldmodel::fixtures::transform(400.0, 400.0)).unwrap()
    }

    #[test]
    fn flood_zero_is_identity() {
        let s = terraced();
        assert_eq!(apply_flood(&s, &FloodSpec { water_level: 0.0 }).unwrap(), s);
    }

    #[test]
    fn flood_above_everything_hides_all_ground() {
        let s = terraced();
        let f = apply_flood(&s, &FloodSpec { water_level: 149.0 }).unwrap();
        for o in s.objects.iter().filter(|o| o.category == Category::Ground) {
            assert!(f.is_hidden(&o.id));
        }
        assert_eq!(f.hidden_landmarks.len(), s.landmarks.len());
        assert!(s.hidden_objects.is_empty(), "original untouched");
    }

    #[test]
    fn flood_at_median_matches_brute_force() {
        let s = terraced();
        let level = s.median_terrain_height();
        let f = apply_flood(&s, &FloodSpec { water_level: level }).unwrap();
        // brute force: scan every grid node
        let hf = &s.heightfield;
        let mut expected = BTreeSet::new();
        for o in &s.objects {
            let (mut inside, mut under) = (0usize, 0usize);
            for r in 0..hf.rows() {
                for c in 0..hf.cols() {
                    let (x, y) = (c as f64 * 2.0, r as f64 * 2.0);
                    if o.footprint.contains(x, y) {
                        inside += 1;
                        if hf.node(c, r) < level {
                            under += 1;
                        }
                    }
                }
            }
            if 2 * under >= inside {
                expected.insert(o.id.clone());
            }
        }
        assert!(!expected.is_empty() && expected.len() < s.objects.len());
        assert_eq!(f.hidden_objects, expected);
        assert!(apply_flood(&s, &FloodSpec { water_level: 151.0 }).is_err());
    }

    #[test]
    fn transcript_is_json_lines() {
        let mut buf = Vec::new();
        let line = TranscriptLine {
            step: 1,
            action: Action::TurnLeft,
            observed_pose: pose(1.0, 2.0, 100.0, 30.0),
            blocked: false,
            done: false,
        };
        write_transcript_line(&mut buf, &line).unwrap();
        write_transcript_line(&mut buf, &line).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: TranscriptLine = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, line);
        assert!(text.contains("\"turn-left\""));
    }
}
