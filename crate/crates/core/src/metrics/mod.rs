//! Navigation metrics (NE, SR, OSR, SPL) and dataset statistics over
//! trajectory logs.

mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, apply_action, CEILING_M, SUCCESS_RADIUS_M};
use crate::scalar::Scalar;
use crate::sim::Episode;
use crate::{Action, Point3, Pose};

pub use stats::{dataset_stats, mentioned_landmarks, Histogram, LandmarkPassRates, StatsReport, NEAR_RADII_M};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("log references unknown episode `{0}`")]
    UnknownEpisode(String),
    #[error("log for `{episode}` has {poses} poses for {actions} actions")]
    LengthMismatch { episode: String, actions: usize, poses: usize },
    #[error("log for `{0}` does not start at the episode start pose")]
    StartMismatch(String),
    #[error("log for `{episode}`: pose {index} is not reachable by action {action}")]
    IllegalTransition { episode: String, index: usize, action: Action },
    #[error("no logs to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub stopped: bool,
    pub final_distance: f64,
}

/// Recorded trajectory: `poses[i + 1]` results from `actions[i]` applied at `poses[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    #[serde(default)]
    pub trajectory_id: String,
    pub episode_id: String,
    pub actions: Vec<Action>,
    pub poses: Vec<Pose>,
    pub outcome: Outcome,
    pub agent_tag: String,
    pub wall_time: f64,
    /// Indices of forward moves blocked by a building (the pose did not change).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocked: Vec<usize>,
}

impl TrajectoryLog {
    pub fn final_pose(&self) -> &Pose {
        self.poses.last().expect("validated logs hold at least the start pose")
    }

    /// Structural checks: pose count, start pose and that each pose follows from
    /// its predecessor by the recorded action. Forward moves may be annotated
    /// as blocked, and altitude may be raised by the terrain clearance floor.
    pub fn validate(&self, ep: Option<&Episode>) -> Result<(), MetricsError> {
        if self.poses.len() != self.actions.len() + 1 {
            return Err(MetricsError::LengthMismatch {
                episode: self.episode_id.clone(),
                actions: self.actions.len(),
                poses: self.poses.len(),
            });
        }
        if let Some(ep) = ep {
            if self.poses[0] != ep.start_pose {
                return Err(MetricsError::StartMismatch(self.episode_id.clone()));
            }
        }
        for (i, (&a, w)) in self.actions.iter().zip(self.poses.windows(2)).enumerate() {
            let (prev, next) = (w[0], w[1]);
            let want = apply_action(prev, a);
            let ok = if self.blocked.contains(&i) {
                a == Action::MoveForward && next == prev
            } else {
                next == want
                    || (next.x == want.x
                        && next.y == want.y
                        && next.yaw == want.yaw
                        && next.pitch == want.pitch
                        && next.z >= want.z
                        && next.z <= CEILING_M)
            };
            if !ok {
                return Err(MetricsError::IllegalTransition {
                    episode: self.episode_id.clone(),
                    index: i + 1,
                    action: a,
                });
            }
        }
        Ok(())
    }
}

/// Sum of consecutive segment lengths.
pub fn path_length<S: Scalar>(poses: &[geodesy::Pose<S>]) -> S {
    poses.windows(2).map(|w| w[0].position().distance(&w[1].position())).sum()
}

/// Per-episode SPL contribution `S * l / max(p, l)`.
pub fn spl_term<S: Scalar>(success: bool, shortest: S, taken: S) -> S {
    if !success {
        return S::zero();
    }
    let denom = taken.max(shortest);
    if denom == S::zero() {
        S::one()
    } else {
        shortest / denom
    }
}

pub fn within_success<S: Scalar>(p: &geodesy::Pose<S>, goal: &geodesy::Point3<S>) -> bool {
    geodesy::euclidean_distance(p, goal) <= S::lit(SUCCESS_RADIUS_M)
}

/// Headline numbers; rates in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub n: usize,
}

/// Mergeable sums behind [`Metrics`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accumulator {
    pub n: usize,
    pub ne_sum: f64,
    pub successes: usize,
    pub oracle_successes: usize,
    pub spl_sum: f64,
}

impl Accumulator {
    pub fn push(&mut self, log: &TrajectoryLog, goal: &Point3) {
        let fin = log.final_pose();
        let ne = geodesy::euclidean_distance(fin, goal);
        let success = within_success(fin, goal);
        let oracle = log.poses.iter().any(|p| within_success(p, goal));
        let l = geodesy::euclidean_distance(&log.poses[0], goal);
        let p = path_length(&log.poses);
        self.n += 1;
        self.ne_sum += ne;
        self.successes += success as usize;
        self.oracle_successes += oracle as usize;
        self.spl_sum += spl_term(success, l, p);
    }

    pub fn merge(mut self, other: &Accumulator) -> Self {
        self.n += other.n;
        self.ne_sum += other.ne_sum;
        self.successes += other.successes;
        self.oracle_successes += other.oracle_successes;
        self.spl_sum += other.spl_sum;
        self
    }

    pub fn finish(&self) -> Metrics {
        if self.n == 0 {
            return Metrics::default();
        }
        let n = self.n as f64;
        Metrics {
            ne: self.ne_sum / n,
            sr: 100.0 * self.successes as f64 / n,
            osr: 100.0 * self.oracle_successes as f64 / n,
            spl: 100.0 * self.spl_sum / n,
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub by_category: BTreeMap<String, Metrics>,
    pub by_split: BTreeMap<String, Metrics>,
    pub n: usize,
}

pub type EpisodeIndex = HashMap<String, Episode>;

pub fn index_episodes<'a>(eps: impl IntoIterator<Item = &'a Episode>) -> EpisodeIndex {
    eps.into_iter().map(|e| (e.id.clone(), e.clone())).collect()
}

/// Partial sums for a batch of logs, grouped for the report breakdowns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSums {
    pub all: Accumulator,
    pub by_category: BTreeMap<String, Accumulator>,
    pub by_split: BTreeMap<String, Accumulator>,
}

impl EvalSums {
    pub fn collect(logs: &[TrajectoryLog], episodes: &EpisodeIndex) -> Result<Self, MetricsError> {
        let mut s = Self::default();
        for log in logs {
            let ep = episodes
                .get(&log.episode_id)
                .ok_or_else(|| MetricsError::UnknownEpisode(log.episode_id.clone()))?;
            log.validate(Some(ep))?;
            s.all.push(log, &ep.goal_center);
            s.by_category
                .entry(ep.goal_category.as_str().to_string())
                .or_default()
                .push(log, &ep.goal_center);
            s.by_split
                .entry(ep.split.as_str().to_string())
                .or_default()
                .push(log, &ep.goal_center);
        }
        Ok(s)
    }

    pub fn merge(mut self, other: &EvalSums) -> Self {
        self.all = self.all.merge(&other.all);
        for (k, v) in &other.by_category {
            let e = self.by_category.entry(k.clone()).or_default();
            *e = e.merge(v);
        }
        for (k, v) in &other.by_split {
            let e = self.by_split.entry(k.clone()).or_default();
            *e = e.merge(v);
        }
        self
    }

    pub fn report(&self) -> EvalReport {
        EvalReport {
            metrics: self.all.finish(),
            by_category: self.by_category.iter().map(|(k, v)| (k.clone(), v.finish())).collect(),
            by_split: self.by_split.iter().map(|(k, v)| (k.clone(), v.finish())).collect(),
            n: self.all.n,
        }
    }
}

pub fn evaluate(logs: &[TrajectoryLog], episodes: &EpisodeIndex) -> Result<EvalReport, MetricsError> {
    if logs.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(EvalSums::collect(logs, episodes)?.report())
}
