//! Corpus persistence (manifest plus JSON Lines), scene-level splits, template
//! goal descriptions, episode generation and the quality-control filter.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry;
use crate::metrics::{EpisodeIndex, TrajectoryLog};
use crate::sim::{self, Episode, SimError, Split, DEFAULT_CLEARANCE_M};
use crate::worldmodel::{generate_scene, io as scene_io, Category, GeneratorParams, Scene, SceneObject, WorldError};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const LOG_DIR: &str = "logs";
pub const SCENE_SUBDIR: &str = "scenes";
/// Re-collection passes after the first collection before an episode is dropped.
pub const MAX_RECOLLECTION_PASSES: usize = 2;
/// Start-pose camera pitch of generated episodes.
pub const DEFAULT_PITCH_DEG: f64 = -90.0;

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("need at least 4 scenes for a split, got {0}")]
    TooFewScenes(usize),
    #[error("scene `{0}` has no visible landmark to describe the goal with")]
    NoLandmark(String),
    #[error("invalid split ratios {0:?}")]
    InvalidRatios([u32; 3]),
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("corpus integrity: {0}")]
    Integrity(String),
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Scene-level split proportions `train : val_unseen : test_unseen`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios(pub [u32; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        Self([24, 4, 6])
    }
}

const SCENE_SPLITS: [Split; 3] = [Split::Train, Split::ValUnseen, Split::TestUnseen];

/// Scene counts per split: largest-remainder apportionment, then every split
/// with a positive ratio receives at least one scene.
pub fn split_counts(n: usize, ratios: &SplitRatios) -> Result<[usize; 3], DatastoreError> {
    let r = ratios.0;
    let total: u64 = r.iter().map(|&v| v as u64).sum();
    if total == 0 || r[0] == 0 {
        return Err(DatastoreError::InvalidRatios(r));
    }
    let mut counts = [0usize; 3];
    let mut rem = [(0u64, 0usize); 3];
    for k in 0..3 {
        let num = n as u64 * r[k] as u64;
        counts[k] = (num / total) as usize;
        rem[k] = (num % total, k);
    }
    let mut left = n - counts.iter().sum::<usize>();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in rem.iter() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    for k in 0..3 {
        if r[k] > 0 && counts[k] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).expect("three splits");
            counts[donor] -= 1;
            counts[k] += 1;
        }
    }
    Ok(counts)
}

/// Seeded scene-level partition into train, val-unseen and test-unseen.
pub fn make_splits(scenes: &[String], ratios: &SplitRatios, seed: u64) -> Result<BTreeMap<String, Split>, DatastoreError> {
    if scenes.len() < 4 {
        return Err(DatastoreError::TooFewScenes(scenes.len()));
    }
    let counts = split_counts(scenes.len(), ratios)?;
    let mut order: Vec<&String> = scenes.iter().collect();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = BTreeMap::new();
    let mut it = order.into_iter();
    for (split, n) in SCENE_SPLITS.iter().zip(counts) {
        for id in it.by_ref().take(n) {
            out.insert(id.clone(), *split);
        }
    }
    Ok(out)
}

/// Tags each episode with its scene's split, then moves a seeded `fraction` of
/// train-scene episodes to val-seen.
pub fn assign_episode_splits(episodes: &mut [Episode], splits: &BTreeMap<String, Split>, fraction: f64, seed: u64) {
    let mut train = Vec::new();
    for (i, ep) in episodes.iter_mut().enumerate() {
        ep.split = splits.get(&ep.scene_id).copied().unwrap_or(Split::Train);
        if ep.split == Split::Train {
            train.push(i);
        }
    }
    train.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let k = (fraction * train.len() as f64).round() as usize;
    for &i in &train[..k.min(train.len())] {
        episodes[i].split = Split::ValSeen;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptionStyle {
    /// Probability of a second sentence naming a nearby object.
    pub surroundings_prob: f64,
    /// Search radius for that object, meters.
    pub surroundings_radius_m: f64,
}

impl Default for DescriptionStyle {
    fn default() -> Self {
        Self {
            surroundings_prob: 0.5,
            surroundings_radius_m: 40.0,
        }
    }
}

/// 8-way compass word for a direction in the world frame (x east, y north).
pub fn compass_word(dx: f64, dy: f64) -> &'static str {
    const WORDS: [&str; 8] = ["east", "northeast", "north", "northwest", "west", "southwest", "south", "southeast"];
    let deg = dy.atan2(dx).to_degrees().rem_euclid(360.0);
    WORDS[(((deg + 22.5) / 45.0).floor() as usize) % 8]
}

fn with_part(part: &str) -> String {
    if part.ends_with('s') {
        part.to_string()
    } else if part.starts_with(['a', 'e', 'i', 'o', 'u']) {
        format!("an {part}")
    } else {
        format!("a {part}")
    }
}

fn object_phrase(o: &SceneObject) -> String {
    let mut s = String::from("the ");
    if let Some(color) = o.name_tokens.first() {
        s.push_str(color);
        s.push(' ');
    }
    s.push_str(o.category.noun());
    if let Some(part) = o.name_tokens.get(1) {
        s.push_str(" with ");
        s.push_str(&with_part(part));
    }
    s
}

/// Template description: goal color, noun and part, then its relation to the
/// nearest visible landmark, optionally followed by a nearby object.
pub fn synthesize_description(
    scene: &Scene,
    goal: &SceneObject,
    style: &DescriptionStyle,
    rng: &mut impl Rng,
) -> Result<String, DatastoreError> {
    let p = [goal.center.x, goal.center.y];
    let (lm, ring, d) = scene
        .visible_landmarks()
        .map(|l| {
            let ring = scene.landmark_world_ring(l);
            let d = geometry::distance_to_polygon(&ring, p);
            (l, ring, d)
        })
        .min_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.name.cmp(&b.0.name)))
        .ok_or_else(|| DatastoreError::NoLandmark(scene.id.clone()))?;
    let relation = if d == 0.0 {
        if lm.kind == "street" { "on".to_string() } else { "in".to_string() }
    } else {
        let (b, _) = geometry::nearest_boundary_point(&ring, p);
        format!("{} of", compass_word(p[0] - b[0], p[1] - b[1]))
    };
    let mut text = format!("{} {relation} {}.", object_phrase(goal), lm.name);
    if rng.random_bool(style.surroundings_prob.clamp(0.0, 1.0)) {
        let r = style.surroundings_radius_m;
        let near = scene
            .objects_in_box([p[0] - r, p[1] - r], [p[0] + r, p[1] + r])
            .filter(|o| o.id != goal.id && !scene.is_hidden(&o.id) && o.category != Category::Other)
            .map(|o| (o, (o.center.x - p[0]).hypot(o.center.y - p[1])))
            .filter(|(_, d)| *d <= r)
            .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.id.cmp(&b.0.id)));
        if let Some((o, _)) = near {
            let color = o.name_tokens.first().map(|c| format!("{c} ")).unwrap_or_default();
            text.push_str(&format!(" It is next to a {color}{}.", o.category.noun()));
        }
    }
    let mut out = text;
    if let Some(first) = out.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    Ok(out)
}

/// Generates up to `n` episodes in one scene. Goals are drawn uniformly over
/// objects; draws without a describable landmark or valid start are skipped.
pub fn generate_episodes(
    scene: &Scene,
    n: usize,
    style: &DescriptionStyle,
    rng: &mut impl Rng,
) -> Result<Vec<Episode>, DatastoreError> {
    let candidates: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| o.category != Category::Other && !scene.is_hidden(&o.id))
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 20 * n.max(1) && !candidates.is_empty() {
        attempts += 1;
        let goal = candidates[rng.random_range(0..candidates.len())];
        let description = match synthesize_description(scene, goal, style, rng) {
            Ok(d) => d,
            Err(DatastoreError::NoLandmark(_)) => return Err(DatastoreError::NoLandmark(scene.id.clone())),
            Err(e) => return Err(e),
        };
        let start = match sim::sample_start(scene, &goal.center, DEFAULT_PITCH_DEG, DEFAULT_CLEARANCE_M, rng) {
            Ok(s) => s,
            Err(SimError::NoValidStart) => continue,
            Err(e) => return Err(e.into()),
        };
        out.push(Episode {
            id: format!("{}-e{:04}", scene.id, out.len()),
            scene_id: scene.id.clone(),
            description,
            goal_center: goal.center,
            goal_object_id: goal.id.clone(),
            goal_category: goal.category,
            start_pose: start,
            split: Split::Train,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub scene_count: usize,
    pub episodes_per_scene: usize,
    pub generator: GeneratorParams,
    pub ratios: SplitRatios,
    /// Share of train-scene episodes held out as val-seen.
    pub val_seen_fraction: f64,
    pub description: DescriptionStyle,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            scene_count: 8,
            episodes_per_scene: 25,
            generator: GeneratorParams::default(),
            ratios: SplitRatios::default(),
            val_seen_fraction: 0.1,
            description: DescriptionStyle::default(),
        }
    }
}

/// Scene seed `i` of a corpus.
pub fn scene_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Scenes, episodes and splits from one seed. No logs yet.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<(Corpus, Vec<Scene>), DatastoreError> {
    let mut scenes = Vec::with_capacity(spec.scene_count);
    for i in 0..spec.scene_count {
        let mut params = spec.generator.clone();
        let s = scene_seed(spec.seed, i);
        params.id = format!("city-{s}");
        scenes.push(generate_scene(s, &params)?);
    }
    let ids: Vec<String> = scenes.iter().map(|s| s.id.clone()).collect();
    let splits = make_splits(&ids, &spec.ratios, spec.seed)?;
    let mut episodes = Vec::new();
    for (i, scene) in scenes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(spec.seed, i) ^ 0xe915_0de5);
        episodes.extend(generate_episodes(scene, spec.episodes_per_scene, &spec.description, &mut rng)?);
    }
    assign_episode_splits(&mut episodes, &splits, spec.val_seen_fraction, spec.seed);
    let corpus = Corpus {
        scenes: ids,
        episodes,
        logs: Vec::new(),
        split_assignment: splits,
    };
    corpus.validate()?;
    Ok((corpus, scenes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub scenes: Vec<SceneEntry>,
    pub scene_dir: String,
    pub episodes_file: String,
    /// Agent tag to log file, relative to the corpus directory.
    pub log_files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<CorpusSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub scenes: Vec<String>,
    pub episodes: Vec<Episode>,
    pub logs: Vec<TrajectoryLog>,
    pub split_assignment: BTreeMap<String, Split>,
}

pub fn log_file_name(tag: &str) -> String {
    format!("{LOG_DIR}/{tag}.jsonl")
}

impl Corpus {
    pub fn episode_index(&self) -> EpisodeIndex {
        crate::metrics::index_episodes(&self.episodes)
    }

    /// Split and reference invariants.
    pub fn validate(&self) -> Result<(), DatastoreError> {
        let bad = |m: String| Err(DatastoreError::Integrity(m));
        let scenes: BTreeSet<&str> = self.scenes.iter().map(String::as_str).collect();
        for (id, split) in &self.split_assignment {
            if !scenes.contains(id.as_str()) {
                return bad(format!("split assigned to unknown scene `{id}`"));
            }
            if *split == Split::ValSeen {
                return bad(format!("scene `{id}` assigned to val_seen; val_seen is episode-level"));
            }
        }
        let mut ids = BTreeSet::new();
        for ep in &self.episodes {
            if !ids.insert(ep.id.as_str()) {
                return bad(format!("duplicate episode `{}`", ep.id));
            }
            let Some(scene_split) = self.split_assignment.get(&ep.scene_id) else {
                return bad(format!("episode `{}` references scene `{}` without a split", ep.id, ep.scene_id));
            };
            let ok = match ep.split {
                Split::Train | Split::ValSeen => *scene_split == Split::Train,
                s => *scene_split == s,
            };
            if !ok {
                return bad(format!(
                    "episode `{}` is {} but its scene is {}",
                    ep.id,
                    ep.split.as_str(),
                    scene_split.as_str()
                ));
            }
        }
        for log in &self.logs {
            if !ids.contains(log.episode_id.as_str()) {
                return bad(format!("log references unknown episode `{}`", log.episode_id));
            }
        }
        Ok(())
    }

    /// Orders logs by agent tag (stable), which is the order they load back in.
    pub fn normalize(&mut self) {
        self.logs.sort_by(|a, b| a.agent_tag.cmp(&b.agent_tag));
    }

    fn manifest(&self, spec: Option<&CorpusSpec>) -> Manifest {
        let tags: BTreeSet<&str> = self.logs.iter().map(|l| l.agent_tag.as_str()).collect();
        Manifest {
            schema_version: SCHEMA_VERSION,
            scenes: self
                .scenes
                .iter()
                .map(|id| SceneEntry {
                    id: id.clone(),
                    split: self.split_assignment.get(id).copied().unwrap_or(Split::Train),
                })
                .collect(),
            scene_dir: SCENE_SUBDIR.into(),
            episodes_file: EPISODES_FILE.into(),
            log_files: tags.into_iter().map(|t| (t.to_string(), log_file_name(t))).collect(),
            spec: spec.cloned(),
        }
    }

    /// Writes the manifest, episodes and per-tag log files (scenes are saved separately).
    pub fn save(&self, dir: &Path, spec: Option<&CorpusSpec>) -> Result<(), DatastoreError> {
        self.validate()?;
        fs::create_dir_all(dir.join(LOG_DIR))?;
        let manifest = self.manifest(spec);
        write_jsonl(&dir.join(&manifest.episodes_file), &self.episodes)?;
        for (tag, file) in &manifest.log_files {
            let logs: Vec<&TrajectoryLog> = self.logs.iter().filter(|l| &l.agent_tag == tag).collect();
            write_jsonl(&dir.join(file), &logs)?;
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Corpus, Manifest), DatastoreError> {
        let manifest = read_manifest(dir)?;
        let episodes = read_jsonl(&dir.join(&manifest.episodes_file))?;
        let mut logs = Vec::new();
        for file in manifest.log_files.values() {
            let p = dir.join(file);
            if p.exists() {
                logs.extend(read_jsonl::<TrajectoryLog>(&p)?);
            }
        }
        let corpus = Corpus {
            scenes: manifest.scenes.iter().map(|s| s.id.clone()).collect(),
            split_assignment: manifest.scenes.iter().map(|s| (s.id.clone(), s.split)).collect(),
            episodes,
            logs,
        };
        corpus.validate()?;
        Ok((corpus, manifest))
    }

    /// Saves the corpus and its scenes under `dir` (scenes in `dir/scenes`).
    pub fn save_with_scenes(&self, dir: &Path, scenes: &[Scene], spec: Option<&CorpusSpec>) -> Result<(), DatastoreError> {
        let sd = dir.join(SCENE_SUBDIR);
        for s in scenes {
            scene_io::save_scene(s, &sd)?;
        }
        self.save(dir, spec)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatastoreError> {
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let found = raw
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DatastoreError::Integrity("manifest has no schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(DatastoreError::SchemaVersion { found: found as u32 });
    }
    Ok(serde_json::from_value(raw)?)
}

/// Scene directory recorded in a corpus manifest.
pub fn scene_dir(dir: &Path) -> Result<PathBuf, DatastoreError> {
    Ok(dir.join(read_manifest(dir)?.scene_dir))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatastoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatastoreError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatastoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Appends one log to `logs/{agent_tag}.jsonl` and registers the file in the
/// manifest. Callers serialize appends per file.
pub fn append_log(dir: &Path, log: &TrajectoryLog) -> Result<(), DatastoreError> {
    let rel = log_file_name(&log.agent_tag);
    let path = dir.join(&rel);
    fs::create_dir_all(dir.join(LOG_DIR))?;
    let mut line = serde_json::to_vec(log)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    f.write_all(&line)?;
    f.flush()?;
    let mut manifest = read_manifest(dir)?;
    if !manifest.log_files.contains_key(&log.agent_tag) {
        manifest.log_files.insert(log.agent_tag.clone(), rel);
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcReason {
    UnknownEpisode,
    NotSuccessful,
    SlowCompletion,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QcResult {
    pub accepted: Vec<TrajectoryLog>,
    pub rejected: Vec<(TrajectoryLog, QcReason)>,
}

/// Rejects logs whose final pose misses the success sphere, then logs taking
/// more than twice the mean wall time of the remaining ones. The timing rule
/// is repeated until it rejects nothing, so filtering the accepted set again
/// is a no-op.
pub fn qc_filter(logs: &[TrajectoryLog], episodes: &EpisodeIndex) -> QcResult {
    let mut res = QcResult::default();
    let mut kept: Vec<&TrajectoryLog> = Vec::new();
    for log in logs {
        match episodes.get(&log.episode_id) {
            None => res.rejected.push((log.clone(), QcReason::UnknownEpisode)),
            Some(ep) if log.poses.is_empty() || !sim::is_success(log.final_pose(), &ep.goal_center) => {
                res.rejected.push((log.clone(), QcReason::NotSuccessful))
            }
            Some(_) => kept.push(log),
        }
    }
    loop {
        if kept.is_empty() {
            break;
        }
        let mean = kept.iter().map(|l| l.wall_time).sum::<f64>() / kept.len() as f64;
        let (slow, fast): (Vec<&TrajectoryLog>, Vec<&TrajectoryLog>) = kept.into_iter().partition(|l| l.wall_time > 2.0 * mean);
        kept = fast;
        if slow.is_empty() {
            break;
        }
        res.rejected.extend(slow.into_iter().map(|l| (l.clone(), QcReason::SlowCompletion)));
    }
    res.accepted = kept.into_iter().cloned().collect();
    res
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CollectionReport {
    pub accepted: Vec<TrajectoryLog>,
    /// Episodes still failing after the last re-collection pass.
    pub dropped: Vec<String>,
    /// Episodes (re)collected in each pass.
    pub attempted_per_pass: Vec<usize>,
}

/// Collection followed by up to [`MAX_RECOLLECTION_PASSES`] re-collection
/// passes for episodes without an accepted log; `run(ep, pass)` produces a log.
pub fn collect_with_qc<E>(
    episodes: &[Episode],
    mut run: impl FnMut(&Episode, usize) -> Result<TrajectoryLog, E>,
) -> Result<CollectionReport, E> {
    let index = crate::metrics::index_episodes(episodes);
    let mut pending: Vec<&Episode> = episodes.iter().collect();
    let mut pool: Vec<TrajectoryLog> = Vec::new();
    let mut report = CollectionReport::default();
    let mut accepted = QcResult::default();
    for pass in 0..=MAX_RECOLLECTION_PASSES {
        if pending.is_empty() {
            break;
        }
        report.attempted_per_pass.push(pending.len());
        for ep in &pending {
            pool.push(run(ep, pass)?);
        }
        accepted = qc_filter(&pool, &index);
        let ok: BTreeSet<&str> = accepted.accepted.iter().map(|l| l.episode_id.as_str()).collect();
        pending = episodes.iter().filter(|e| !ok.contains(e.id.as_str())).collect();
        pool = accepted.accepted.clone();
    }
    report.dropped = pending.iter().map(|e| e.id.clone()).collect();
    report.accepted = accepted.accepted;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm::extract_cues;
    use crate::metrics::fixtures::{episode, log_from};
    use crate::worldmodel::fixtures::{object, small_scene};
    use crate::{Action, Point3, Pose};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    #[test]
    fn default_ratio_on_34_scenes() {
        let s = make_splits(&ids(34), &SplitRatios::default(), 1).unwrap();
        let count = |sp| s.values().filter(|v| **v == sp).count();
        assert_eq!((count(Split::Train), count(Split::ValUnseen), count(Split::TestUnseen)), (24, 4, 6));
    }

    #[test]
    fn splits_are_seeded_and_partition() {
        assert_eq!(make_splits(&ids(12), &SplitRatios::default(), 4).unwrap(), make_splits(&ids(12), &SplitRatios::default(), 4).unwrap());
        for seed in 0..100 {
            let s = make_splits(&ids(9), &SplitRatios::default(), seed).unwrap();
            assert_eq!(s.len(), 9);
            for sp in SCENE_SPLITS {
                assert!(s.values().any(|v| *v == sp), "seed {seed}: {sp:?} empty");
            }
        }
        assert!(matches!(make_splits(&ids(3), &SplitRatios::default(), 0), Err(DatastoreError::TooFewScenes(3))));
    }

    #[test]
    fn split_counts_largest_remainder() {
        // 10 * 24/34 = 7.06, 10 * 4/34 = 1.18, 10 * 6/34 = 1.76 -> 7, 1, 2
        assert_eq!(split_counts(10, &SplitRatios::default()).unwrap(), [7, 1, 2]);
        // 4 scenes: 2.82, 0.47, 0.71 -> 3, 0, 1, then val_unseen takes one from train
        assert_eq!(split_counts(4, &SplitRatios::default()).unwrap(), [2, 1, 1]);
    }

    #[test]
    fn val_seen_comes_from_train_scenes() {
        let mut eps: Vec<Episode> = (0..40)
            .map(|i| {
                let mut e = episode(&format!("e{i}"), Pose::new(0.0, 0.0, 100.0, -90.0, 0.0), Point3::new(0.0, 0.0, 0.0), Category::Car, Split::Train);
                e.scene_id = format!("s{:02}", i % 8);
                e
            })
            .collect();
        let splits = make_splits(&ids(8), &SplitRatios::default(), 2).unwrap();
        assign_episode_splits(&mut eps, &splits, 0.1, 2);
        let train_eps = eps.iter().filter(|e| splits[&e.scene_id] == Split::Train).count();
        let vs: Vec<&Episode> = eps.iter().filter(|e| e.split == Split::ValSeen).collect();
        assert_eq!(vs.len(), (0.1 * train_eps as f64).round() as usize);
        assert!(vs.iter().all(|e| splits[&e.scene_id] == Split::Train));
    }

    fn car(id: &str, x: f64, y: f64) -> SceneObject {
        object(id, Category::Car, &["red", "sunroof"], [x - 2.3, y - 0.95], [x + 2.3, y + 0.95], 1.5)
    }

    #[test]
    fn description_names_color_noun_landmark_and_direction() {
        let mut s = small_scene();
        // 30 m north of the Sidney Street band (y in [90, 102])
        s.objects.push(car("car-9", 170.0, 132.0));
        let s = Scene::new(s.id.clone(), (*s.heightfield).clone(), s.objects.clone(), s.landmarks.clone(), s.transform).unwrap();
        let goal = s.object("car-9").unwrap();
        let style = DescriptionStyle {
            surroundings_prob: 0.0,
            ..Default::default()
        };
        let d = synthesize_description(&s, goal, &style, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(d, "The red car with a sunroof north of Sidney Street.");
        for w in ["red", "car", "Sidney Street", "north"] {
            assert!(d.contains(w));
        }
    }

    #[test]
    fn description_needs_a_landmark() {
        let mut s = small_scene();
        s.hidden_landmarks = s.landmarks.iter().map(|l| l.name.clone()).collect();
        let goal = s.objects[0].clone();
        let r = synthesize_description(&s, &goal, &DescriptionStyle::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(DatastoreError::NoLandmark(_))));
    }

    #[test]
    fn compass_sectors() {
        assert_eq!(compass_word(1.0, 0.0), "east");
        assert_eq!(compass_word(1.0, 1.0), "northeast");
        assert_eq!(compass_word(0.0, 1.0), "north");
        assert_eq!(compass_word(-1.0, -0.1), "west");
        assert_eq!(compass_word(0.1, -1.0), "south");
    }

    #[test]
    fn generated_descriptions_round_trip_through_cues() {
        let scene = generate_scene(3, &GeneratorParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut n = 0;
        for o in scene.objects.iter().cycle().take(1000) {
            let d = synthesize_description(&scene, o, &DescriptionStyle::default(), &mut rng).unwrap();
            let cues = extract_cues(&d, &scene).unwrap();
            // oracle: the nearest landmark by brute force
            let p = [o.center.x, o.center.y];
            let nearest = scene
                .landmarks
                .iter()
                .map(|l| (geometry::distance_to_polygon(&scene.landmark_world_ring(l), p), &l.name))
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
                .unwrap()
                .1;
            assert!(cues.landmark_names.contains(nearest), "{d} -> {cues:?}");
            assert!(!cues.goal_phrases.is_empty() || o.category == Category::Other, "{d}");
            n += 1;
        }
        assert_eq!(n, 1000);
    }

    fn ep_at(id: &str, goal: Point3) -> Episode {
        episode(id, Pose::new(goal.x + 300.0, goal.y, goal.z, -90.0, 180.0), goal, Category::Car, Split::Train)
    }

    #[test]
    fn qc_rejects_misses_and_slow_outliers() {
        let goal = Point3::new(0.0, 0.0, 0.0);
        let mut eps = Vec::new();
        let mut logs = Vec::new();
        for i in 0..10 {
            let ep = ep_at(&format!("e{i}"), goal);
            let mut actions = vec![Action::MoveForward; 56];
            actions.push(Action::Stop);
            logs.push(log_from(&ep, &actions));
            eps.push(ep);
        }
        // stops 25 m short
        let miss = ep_at("miss", goal);
        let mut a = vec![Action::MoveForward; 55];
        a.push(Action::Stop);
        logs.push(log_from(&miss, &a));
        eps.push(miss);
        // ten times the mean completion time
        logs[3].wall_time *= 10.0;
        let idx = crate::metrics::index_episodes(&eps);
        let r = qc_filter(&logs, &idx);
        assert_eq!(r.accepted.len() + r.rejected.len(), logs.len());
        let rejected: Vec<(&str, QcReason)> = r.rejected.iter().map(|(l, q)| (l.episode_id.as_str(), *q)).collect();
        assert_eq!(rejected, vec![("miss", QcReason::NotSuccessful), ("e3", QcReason::SlowCompletion)]);
        // oracle: mean over the 10 successful logs is (9 * 57 + 570) / 10 = 108.3; 570 > 216.6
        let again = qc_filter(&r.accepted, &idx);
        assert!(again.rejected.is_empty());
    }

    #[test]
    fn recollection_caps_at_two_passes() {
        let goal = Point3::new(0.0, 0.0, 0.0);
        let eps = vec![ep_at("good", goal), ep_at("late", goal), ep_at("never", goal)];
        let r = collect_with_qc(&eps, |ep, pass| -> Result<TrajectoryLog, ()> {
            let n = match (ep.id.as_str(), pass) {
                ("good", _) | ("late", 2) => 56,
                _ => 40,
            };
            let mut a = vec![Action::MoveForward; n];
            a.push(Action::Stop);
            Ok(log_from(ep, &a))
        })
        .unwrap();
        assert_eq!(r.attempted_per_pass, vec![3, 2, 2]);
        assert_eq!(r.dropped, vec!["never".to_string()]);
        let mut ok: Vec<&str> = r.accepted.iter().map(|l| l.episode_id.as_str()).collect();
        ok.sort();
        assert_eq!(ok, vec!["good", "late"]);
    }

    #[test]
    fn corpus_round_trips_losslessly() {
        let spec = CorpusSpec {
            seed: 5,
            scene_count: 4,
            episodes_per_scene: 6,
            generator: GeneratorParams {
                extent: (600.0, 600.0),
                object_count: 120,
                ..Default::default()
            },
            ..Default::default()
        };
        let (mut corpus, scenes) = generate_corpus(&spec).unwrap();
        for ep in corpus.episodes.iter().take(5) {
            let mut actions = vec![Action::TurnLeft, Action::MoveForward, Action::Ascend];
            actions.push(Action::Stop);
            let mut log = log_from(ep, &actions);
            log.agent_tag = if log.episode_id.ends_with('1') { "random".into() } else { "oracle".into() };
            corpus.logs.push(log);
        }
        corpus.normalize();
        let dir = tempfile::tempdir().unwrap();
        corpus.save_with_scenes(dir.path(), &scenes, Some(&spec)).unwrap();
        let (back, manifest) = Corpus::load(dir.path()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(manifest.spec.as_ref(), Some(&spec));
        let s0 = scene_io::load_scene(&scene_dir(dir.path()).unwrap(), &corpus.scenes[0]).unwrap();
        assert_eq!(s0, scenes[0]);
    }

    #[test]
    fn manifest_requires_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        Corpus::default().save(dir.path(), None).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let mut m: serde_json::Value = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
        m["schema_version"] = 99.into();
        fs::write(&p, m.to_string()).unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(DatastoreError::SchemaVersion { found: 99 })));
        m.as_object_mut().unwrap().remove("schema_version");
        fs::write(&p, m.to_string()).unwrap();
        assert!(matches!(Corpus::load(dir.path()), Err(DatastoreError::Integrity(_))));
    }

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let spec = CorpusSpec {
            seed: 7,
            scene_count: 4,
            episodes_per_scene: 10,
            ..Default::default()
        };
        let (a, _) = generate_corpus(&spec).unwrap();
        let (b, _) = generate_corpus(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.episodes.len(), 40);
        for ep in &a.episodes {
            let d = crate::geodesy::horizontal_distance(&ep.start_pose, &ep.goal_center);
            assert!((50.0..=500.0).contains(&d));
            assert!((100.0..=150.0).contains(&ep.start_pose.z));
        }
    }

    #[test]
    fn appended_logs_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let ep = ep_at("e0", Point3::new(0.0, 0.0, 0.0));
        let corpus = Corpus {
            scenes: vec!["s".into()],
            episodes: vec![ep.clone()],
            logs: vec![],
            split_assignment: [("s".to_string(), Split::Train)].into(),
        };
        corpus.save(dir.path(), None).unwrap();
        let mut log = log_from(&ep, &[Action::Stop]);
        log.agent_tag = "human".into();
        append_log(dir.path(), &log).unwrap();
        append_log(dir.path(), &log).unwrap();
        let (back, m) = Corpus::load(dir.path()).unwrap();
        assert_eq!(back.logs, vec![log.clone(), log]);
        assert_eq!(m.log_files["human"], "logs/human.jsonl");
    }
}
