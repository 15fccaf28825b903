//! The `aeronav` command line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use aeronav_core::agents::{replay, run_episode, Agent, AgentError, LandmarkPilot, OracleAgent, RandomAgent, RunOptions};
use aeronav_core::datastore::{self, qc_filter, read_jsonl, Corpus, CorpusSpec, DatastoreError, QcReason};
use aeronav_core::metrics::{dataset_stats, evaluate, index_episodes, MetricsError, TrajectoryLog};
use aeronav_core::sim::{apply_flood, FloodSpec, NoiseSpec, RenderConfig, SimConfig, SimError, Split};
use aeronav_core::worldmodel::{io as scene_io, Scene, WorldError};
use aeronav_gateway::{AppState, GatewayConfig, GatewayError, SessionConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Datastore(#[from] DatastoreError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            _ => 1,
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "aeronav", version, about = "Aerial language-guided navigation simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Pose-noise standard deviation in meters; 0 disables noise.
    #[arg(long, global = true, allow_negative_numbers = true, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, global = true, allow_negative_numbers = true, default_value_t = 100.0)]
    pub noise_clip: f64,
    /// Water level in meters; 0 is no flood.
    #[arg(long, global = true, allow_negative_numbers = true, default_value_t = 0.0)]
    pub flood_level: f64,
    #[arg(long, global = true, default_value_t = aeronav_core::sim::DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long, global = true, allow_negative_numbers = true, default_value_t = 90.0)]
    pub fov_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Oracle,
    LandmarkPilot,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenes and episodes from the seed.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        scenes: usize,
        #[arg(long, default_value_t = 25)]
        episodes_per_scene: usize,
    },
    /// Run an agent over the corpus episodes and store its logs.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        agent: AgentKind,
        /// Restrict to one split (train, val_seen, val_unseen, test_unseen).
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Compute NE, SR, OSR and SPL for stored logs.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Agent tag whose logs are evaluated; all logs when absent.
        #[arg(long)]
        agent: Option<String>,
        /// Evaluate this JSONL file instead of the corpus logs.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Write report.json here; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset statistics and histogram CSVs.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the quality-control filter to one agent's logs.
    Qc {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        agent: String,
        /// Replace the stored logs with the accepted ones.
        #[arg(long)]
        apply: bool,
    },
    /// Re-execute stored logs and check every pose.
    Replay {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        agent: Option<String>,
    },
    /// Serve the HTTP gateway.
    Serve {
        #[arg(long, env = "PORT", default_value_t = aeronav_gateway::DEFAULT_PORT)]
        port: u16,
        #[arg(long, env = "SCENE_DIR")]
        scene_dir: Option<PathBuf>,
        #[arg(long, env = "CORPUS_DIR", default_value = "corpus")]
        corpus_dir: PathBuf,
    },
}

impl GlobalOpts {
    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        if self.max_steps == 0 {
            return Err(CliError::Validation("--max-steps must be positive".into()));
        }
        let noise = if self.noise_sigma == 0.0 {
            NoiseSpec {
                clip: self.noise_clip,
                ..NoiseSpec::default()
            }
        } else {
            NoiseSpec::on(self.noise_sigma, self.noise_clip)
        };
        noise.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(SimConfig {
            max_steps: self.max_steps,
            noise,
            ..SimConfig::default()
        })
    }

    pub fn flood(&self) -> Result<Option<FloodSpec>, CliError> {
        let f = FloodSpec {
            water_level: self.flood_level,
        };
        f.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok((self.flood_level > 0.0).then_some(f))
    }

    pub fn fov(&self) -> Result<f64, CliError> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(CliError::Validation(format!("--fov-deg {} is outside (0, 180)", self.fov_deg)));
        }
        Ok(self.fov_deg)
    }

    pub fn run_options(&self) -> Result<RunOptions, CliError> {
        Ok(RunOptions {
            sim: self.sim_config()?,
            render: RenderConfig::minimal(self.fov()?),
            seed: self.seed,
        })
    }
}

pub fn make_agent(kind: AgentKind, seed: u64) -> Box<dyn Agent> {
    match kind {
        AgentKind::Oracle => Box::new(OracleAgent::default()),
        AgentKind::LandmarkPilot => Box::new(LandmarkPilot::default()),
        AgentKind::Random => Box::new(RandomAgent::new(seed)),
    }
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| CliError::Validation(format!("unknown split `{s}`")))
}

/// Scenes of a corpus keyed by id, flooded when requested.
pub fn load_scenes(corpus: &Path, flood: Option<&FloodSpec>) -> Result<HashMap<String, Scene>, CliError> {
    let mut out = HashMap::new();
    for s in scene_io::load_scene_dir(&datastore::scene_dir(corpus)?)? {
        let s = match flood {
            Some(f) => apply_flood(&s, f)?,
            None => s,
        };
        out.insert(s.id.clone(), s);
    }
    Ok(out)
}

fn tagged<'a>(logs: &'a [TrajectoryLog], tag: Option<&'a str>) -> impl Iterator<Item = &'a TrajectoryLog> + 'a {
    logs.iter().filter(move |l| tag.is_none_or(|t| l.agent_tag == t))
}

fn write_json(path: Option<&Path>, v: &impl Serialize) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v)? + "\n";
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, s)?
        }
        None => print!("{s}"),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct QcSummary {
    agent: String,
    accepted: usize,
    rejected: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct ReplaySummary {
    replayed: usize,
    failures: Vec<String>,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Generate {
            out,
            scenes,
            episodes_per_scene,
        } => {
            let spec = CorpusSpec {
                seed: g.seed,
                scene_count: scenes,
                episodes_per_scene,
                ..CorpusSpec::default()
            };
            let (corpus, scenes) = datastore::generate_corpus(&spec).map_err(|e| match e {
                DatastoreError::TooFewScenes(_) | DatastoreError::InvalidRatios(_) => CliError::Validation(e.to_string()),
                e => e.into(),
            })?;
            corpus.save_with_scenes(&out, &scenes, Some(&spec))?;
            eprintln!("{} scenes, {} episodes -> {}", scenes.len(), corpus.episodes.len(), out.display());
        }
        Command::Run {
            corpus: dir,
            agent,
            split,
            limit,
        } => {
            let opts = g.run_options()?;
            let split = split.as_deref().map(parse_split).transpose()?;
            let (mut corpus, manifest) = Corpus::load(&dir)?;
            let scenes = load_scenes(&dir, g.flood()?.as_ref())?;
            let eps: Vec<_> = corpus
                .episodes
                .iter()
                .filter(|e| split.is_none_or(|s| e.split == s))
                .take(limit.unwrap_or(usize::MAX))
                .cloned()
                .collect();
            if eps.is_empty() {
                return Err(CliError::Validation("no episodes selected".into()));
            }
            let mut logs = Vec::with_capacity(eps.len());
            let mut tag = String::new();
            for ep in &eps {
                let scene = scenes
                    .get(&ep.scene_id)
                    .ok_or_else(|| CliError::Validation(format!("scene {} missing from the scene directory", ep.scene_id)))?;
                let mut a = make_agent(agent, aeronav_core::agents::episode_seed(g.seed, &ep.id));
                tag = a.tag().to_string();
                logs.push(run_episode(a.as_mut(), scene, ep, &opts)?);
            }
            let ran: BTreeSet<&str> = eps.iter().map(|e| e.id.as_str()).collect();
            corpus.logs.retain(|l| l.agent_tag != tag || !ran.contains(l.episode_id.as_str()));
            let report = evaluate(&logs, &index_episodes(&eps))?;
            corpus.logs.extend(logs);
            corpus.normalize();
            corpus.save(&dir, manifest.spec.as_ref())?;
            eprintln!(
                "{tag}: {} episodes, SR {:.1} OSR {:.1} SPL {:.1} NE {:.1}",
                report.n, report.metrics.sr, report.metrics.osr, report.metrics.spl, report.metrics.ne
            );
        }
        Command::Evaluate { corpus, agent, logs, out } => {
            let (c, _) = Corpus::load(&corpus)?;
            let logs: Vec<TrajectoryLog> = match logs {
                Some(p) => read_jsonl(&p)?,
                None => tagged(&c.logs, agent.as_deref()).cloned().collect(),
            };
            if logs.is_empty() {
                return Err(CliError::Validation("no logs to evaluate".into()));
            }
            let report = evaluate(&logs, &c.episode_index())?;
            write_json(out.as_deref(), &report)?;
        }
        Command::Stats { corpus, agent, out } => {
            let (c, _) = Corpus::load(&corpus)?;
            let scenes = load_scenes(&corpus, None)?;
            let logs: Vec<TrajectoryLog> = tagged(&c.logs, agent.as_deref()).cloned().collect();
            let report = dataset_stats(&logs, &c.episode_index(), &scenes);
            let files = report.write_csvs(&out)?;
            write_json(Some(&out.join("stats.json")), &report)?;
            eprintln!("{} csv files and stats.json -> {}", files.len(), out.display());
        }
        Command::Qc { corpus: dir, agent, apply } => {
            let (mut c, manifest) = Corpus::load(&dir)?;
            let logs: Vec<TrajectoryLog> = tagged(&c.logs, Some(&agent)).cloned().collect();
            if logs.is_empty() {
                return Err(CliError::Validation(format!("no logs tagged `{agent}`")));
            }
            let res = qc_filter(&logs, &c.episode_index());
            let mut rejected = BTreeMap::new();
            for (_, r) in &res.rejected {
                let key = match r {
                    QcReason::UnknownEpisode => "unknown_episode",
                    QcReason::NotSuccessful => "not_successful",
                    QcReason::SlowCompletion => "slow_completion",
                };
                *rejected.entry(key.to_string()).or_insert(0) += 1;
            }
            write_json(
                None,
                &QcSummary {
                    agent: agent.clone(),
                    accepted: res.accepted.len(),
                    rejected,
                },
            )?;
            if apply {
                c.logs.retain(|l| l.agent_tag != agent);
                c.logs.extend(res.accepted);
                c.normalize();
                c.save(&dir, manifest.spec.as_ref())?;
            }
        }
        Command::Replay { corpus, agent } => {
            let (c, _) = Corpus::load(&corpus)?;
            let scenes = load_scenes(&corpus, g.flood()?.as_ref())?;
            let index = c.episode_index();
            let cfg = g.sim_config()?;
            let mut summary = ReplaySummary {
                replayed: 0,
                failures: Vec::new(),
            };
            for log in tagged(&c.logs, agent.as_deref()) {
                summary.replayed += 1;
                let ep = &index[&log.episode_id];
                if let Err(e) = replay(log, ep, &scenes[&ep.scene_id], &cfg) {
                    summary.failures.push(format!("{}: {e}", log.trajectory_id));
                }
            }
            write_json(None, &summary)?;
            if !summary.failures.is_empty() {
                return Err(CliError::Validation(format!("{} logs failed to replay", summary.failures.len())));
            }
        }
        Command::Serve {
            port,
            scene_dir,
            corpus_dir,
        } => {
            let cfg = GatewayConfig {
                corpus_dir,
                scene_dir,
                session: SessionConfig {
                    sim: g.sim_config()?,
                    fov_deg: g.fov()?,
                    seed: g.seed,
                    ..SessionConfig::default()
                },
                flood: g.flood()?,
                max_sessions: aeronav_gateway::DEFAULT_MAX_SESSIONS,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let state = AppState::load(cfg)?;
                eprintln!("listening on 0.0.0.0:{port}");
                aeronav_gateway::serve(state, port).await
            })?;
        }
    }
    Ok(())
}
