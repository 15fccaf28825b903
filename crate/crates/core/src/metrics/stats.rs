//! Corpus statistics: distance, description and action histograms, action
//! proportions by distance to the mentioned landmarks, and landmark pass rates.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpisodeIndex, TrajectoryLog};
use crate::geodesy::horizontal_distance;
use crate::geometry;
use crate::gsm::{extract_cues, GsmError};
use crate::text;
use crate::worldmodel::{point_in_landmark, Landmark, Scene};
use crate::{Action, Point3, Pose};

/// Centroid radii for the "near landmark" pass rates.
pub const NEAR_RADII_M: [f64; 2] = [20.0, 40.0];
const PROXIMITY_BIN_M: f64 = 20.0;
const PROXIMITY_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    /// Bin edges; values outside are counted in the first or last bin.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn uniform(name: &str, lo: f64, hi: f64, width: f64) -> Self {
        let n = ((hi - lo) / width).ceil() as usize;
        Self {
            name: name.to_string(),
            edges: (0..=n).map(|i| lo + width * i as f64).collect(),
            counts: vec![0; n],
        }
    }

    pub fn add(&mut self, v: f64) {
        let k = self.edges[1..].iter().position(|e| v < *e).unwrap_or(self.counts.len() - 1);
        self.counts[k] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityBin {
    pub lo: f64,
    /// `None` for the open-ended last bin.
    pub hi: Option<f64>,
    pub counts: BTreeMap<String, u64>,
    pub proportions: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPassRates {
    pub trajectories: usize,
    /// Trajectories with a pose over a mentioned landmark polygon.
    pub passed_over: usize,
    pub within_20m: usize,
    pub within_40m: usize,
    /// Rates in percent.
    pub pass_rate: f64,
    pub near_20m_rate: f64,
    pub near_40m_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_episodes: usize,
    pub n_logs: usize,
    pub start_distance: Histogram,
    pub start_altitude: Histogram,
    pub description_words: Histogram,
    pub actions_per_trajectory: Histogram,
    pub mean_actions: f64,
    pub action_counts: BTreeMap<String, u64>,
    pub action_proportions: BTreeMap<String, f64>,
    pub proximity_actions: Vec<ProximityBin>,
    pub landmark_pass: LandmarkPassRates,
}

impl StatsReport {
    /// Writes one CSV per histogram plus the proximity table; returns the paths.
    pub fn write_csvs(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for h in [&self.start_distance, &self.start_altitude, &self.description_words, &self.actions_per_trajectory] {
            let p = dir.join(format!("{}.csv", h.name));
            fs::write(&p, h.to_csv())?;
            out.push(p);
        }
        let mut s = String::from("action,count,proportion\n");
        for (a, c) in &self.action_counts {
            s.push_str(&format!("{a},{c},{}\n", self.action_proportions[a]));
        }
        let p = dir.join("action_proportions.csv");
        fs::write(&p, s)?;
        out.push(p);
        let mut s = String::from("bin_lo,bin_hi,action,count,proportion\n");
        for b in &self.proximity_actions {
            let hi = b.hi.map(|h| h.to_string()).unwrap_or_else(|| "inf".into());
            for a in Action::ALL {
                let k = a.as_str();
                s.push_str(&format!(
                    "{},{hi},{k},{},{}\n",
                    b.lo,
                    b.counts.get(k).unwrap_or(&0),
                    b.proportions.get(k).unwrap_or(&0.0)
                ));
            }
        }
        let p = dir.join("proximity_actions.csv");
        fs::write(&p, s)?;
        out.push(p);
        Ok(out)
    }
}

fn proportions(counts: &BTreeMap<String, u64>) -> BTreeMap<String, f64> {
    let total: u64 = counts.values().sum();
    counts
        .iter()
        .map(|(k, v)| (k.clone(), if total == 0 { 0.0 } else { *v as f64 / total as f64 }))
        .collect()
}

/// Landmarks named in an episode description.
pub fn mentioned_landmarks<'a>(scene: &'a Scene, description: &str) -> Vec<&'a Landmark> {
    let cues = match extract_cues(description, scene) {
        Ok(c) | Err(GsmError::NoLandmarkFound(c)) => c,
        Err(_) => return Vec::new(),
    };
    cues.landmark_names.iter().filter_map(|n| scene.landmark(n)).collect()
}

/// Horizontal meters from a pose to a landmark polygon, zero inside it.
fn distance_to_landmark(scene: &Scene, l: &Landmark, p: &Pose) -> f64 {
    let (u, v) = scene.transform.to_map(p.x, p.y);
    if point_in_landmark(l, u, v) {
        0.0
    } else {
        geometry::distance_to_polygon(&l.polygon, [u, v]) * scene.transform.meters_per_map_unit
    }
}

fn centroid_world(scene: &Scene, l: &Landmark) -> Point3 {
    let [u, v] = l.centroid();
    let (x, y) = scene.transform.map_to_world(u, v);
    Point3::new(x, y, 0.0)
}

pub fn dataset_stats(logs: &[TrajectoryLog], episodes: &EpisodeIndex, scenes: &HashMap<String, Scene>) -> StatsReport {
    let mut start_distance = Histogram::uniform("start_distance", 0.0, 550.0, 50.0);
    let mut start_altitude = Histogram::uniform("start_altitude", 100.0, 150.0, 5.0);
    let mut description_words = Histogram::uniform("description_words", 0.0, 100.0, 5.0);
    let mut actions_per_trajectory = Histogram::uniform("actions_per_trajectory", 0.0, 1000.0, 50.0);

    let mut ids: Vec<&String> = episodes.keys().collect();
    ids.sort();
    for id in &ids {
        let ep = &episodes[*id];
        start_distance.add(horizontal_distance(&ep.start_pose, &ep.goal_center));
        start_altitude.add(ep.start_pose.z);
        description_words.add(text::word_count(&ep.description) as f64);
    }

    let mut action_counts: BTreeMap<String, u64> = Action::ALL.iter().map(|a| (a.as_str().to_string(), 0)).collect();
    let mut prox: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); PROXIMITY_BINS + 1];
    let mut pass = LandmarkPassRates::default();
    let mut total_actions = 0usize;

    for log in logs {
        actions_per_trajectory.add(log.actions.len() as f64);
        total_actions += log.actions.len();
        for a in &log.actions {
            *action_counts.get_mut(a.as_str()).expect("all actions present") += 1;
        }
        let Some(ep) = episodes.get(&log.episode_id) else {
            continue;
        };
        let Some(scene) = scenes.get(&ep.scene_id) else {
            continue;
        };
        let lms = mentioned_landmarks(scene, &ep.description);
        if lms.is_empty() {
            continue;
        }
        pass.trajectories += 1;
        let centroids: Vec<Point3> = lms.iter().map(|l| centroid_world(scene, l)).collect();
        let over = log.poses.iter().any(|p| {
            let (u, v) = scene.transform.to_map(p.x, p.y);
            lms.iter().any(|l| point_in_landmark(l, u, v))
        });
        let near = |r: f64| log.poses.iter().any(|p| centroids.iter().any(|c| horizontal_distance(p, c) <= r));
        pass.passed_over += over as usize;
        pass.within_20m += near(NEAR_RADII_M[0]) as usize;
        pass.within_40m += near(NEAR_RADII_M[1]) as usize;
        for (a, p) in log.actions.iter().zip(&log.poses) {
            let d = lms
                .iter()
                .map(|l| distance_to_landmark(scene, l, p))
                .fold(f64::INFINITY, f64::min);
            let bin = ((d / PROXIMITY_BIN_M).floor() as usize).min(PROXIMITY_BINS);
            *prox[bin].entry(a.as_str().to_string()).or_default() += 1;
        }
    }
    if pass.trajectories > 0 {
        let n = pass.trajectories as f64;
        pass.pass_rate = 100.0 * pass.passed_over as f64 / n;
        pass.near_20m_rate = 100.0 * pass.within_20m as f64 / n;
        pass.near_40m_rate = 100.0 * pass.within_40m as f64 / n;
    }

    StatsReport {
        n_episodes: episodes.len(),
        n_logs: logs.len(),
        start_distance,
        start_altitude,
        description_words,
        actions_per_trajectory,
        mean_actions: if logs.is_empty() { 0.0 } else { total_actions as f64 / logs.len() as f64 },
        action_proportions: proportions(&action_counts),
        action_counts,
        proximity_actions: prox
            .into_iter()
            .enumerate()
            .map(|(i, counts)| ProximityBin {
                lo: i as f64 * PROXIMITY_BIN_M,
                hi: (i < PROXIMITY_BINS).then(|| (i + 1) as f64 * PROXIMITY_BIN_M),
                proportions: proportions(&counts),
                counts,
            })
            .collect(),
        landmark_pass: pass,
    }
}
