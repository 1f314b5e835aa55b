//! The work behind each subcommand, as plain functions returning data.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context};
use ddrl_core::agents::{evaluate, train, ActMode, Architecture, EpochReport, TrainOutput};
use ddrl_core::fixtures;
use ddrl_core::observation::{describe_central, describe_local, NeighborTopology, ORIENTATION_DIM};
use ddrl_core::physics::{run_episode, trajectory_csv};
use ddrl_core::rng::derive_seed;
use ddrl_core::stats::{cohens_d, mann_whitney_u, rank_controllers, summarize, welch_t_test, Method, RankEntry, Ranked, Sample, Summary};
use ddrl_core::terrain::diamond_square;
use ddrl_core::{Environment, LegId, TerrainSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::files::{self, CurveWriter};

pub const CONFIG_FILE: &str = "config.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.json";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:05}.json")
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub output: TrainOutput,
    pub out_dir: PathBuf,
    pub final_checkpoint: PathBuf,
    pub final_hash: String,
}

/// Trains one run and writes `config.json`, `curve.csv` and checkpoints
/// (every `checkpoint_every` epochs plus `final.json`, each with a hash sidecar).
pub fn train_run(config: &RunConfig, out_dir: &Path) -> anyhow::Result<TrainResult> {
    config.validate()?;
    files::write_file(&out_dir.join(CONFIG_FILE), &files::to_json_pretty(config))?;
    let mut curve = CurveWriter::create(&out_dir.join(CURVE_FILE))?;
    let ck_dir = out_dir.join(CHECKPOINT_DIR);
    let last_epoch = config.epochs;
    let mut final_hash = String::new();
    let mut hook = |report: &EpochReport<'_>| -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
        curve.push(report.row)?;
        if let Some(ck) = report.checkpoint {
            curve.flush()?;
            if ck.epoch % config.checkpoint_every == 0 {
                files::save_checkpoint(&ck_dir.join(checkpoint_name(ck.epoch)), ck)?;
            }
            if ck.epoch == last_epoch {
                final_hash = files::save_checkpoint(&ck_dir.join(FINAL_CHECKPOINT), ck)?;
            }
        }
        Ok(())
    };
    let output = train(&config.train_config(), &mut hook).with_context(|| format!("training {}", config.run_name()))?;
    curve.flush()?;
    Ok(TrainResult { output, out_dir: out_dir.to_path_buf(), final_checkpoint: ck_dir.join(FINAL_CHECKPOINT), final_hash })
}

/// Runs several seeds of one config on a pool of `jobs` threads. Each run is
/// independent, so results do not depend on `jobs`.
pub fn train_seeds(base: &RunConfig, seeds: &[u64], root: &Path, jobs: usize) -> anyhow::Result<Vec<TrainResult>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Mutex<Vec<(usize, anyhow::Result<TrainResult>)>> = Mutex::new(Vec::new());
    pool.scope(|s| {
        for (i, &seed) in seeds.iter().enumerate() {
            let results = &results;
            s.spawn(move |_| {
                let mut cfg = base.clone();
                cfg.seed = seed;
                let dir = root.join(cfg.run_name());
                let r = train_run(&cfg, &dir);
                results.lock().expect("no panics while holding the lock").push((i, r));
            });
        }
    });
    let mut all = results.into_inner().expect("pool finished");
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, r)| r).collect()
}

/// Evaluation of one checkpoint on one terrain with the deterministic policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub controller_id: String,
    pub architecture: Architecture,
    pub training_seed: u64,
    pub checkpoint_epoch: usize,
    pub checkpoint_hash: String,
    pub train_terrain: TerrainSpec,
    pub eval_terrain: TerrainSpec,
    pub eval_seed: u64,
    pub episode_len: usize,
    pub episode_seeds: Vec<u64>,
    pub returns: Vec<f64>,
    pub mean: f64,
    /// n - 1 denominator; 0 for a single episode.
    pub sd: f64,
}

pub fn eval_checkpoint(
    checkpoint: &Path,
    terrain: &TerrainSpec,
    episodes: usize,
    seed: u64,
    episode_len: Option<usize>,
) -> anyhow::Result<EvalReport> {
    if episodes == 0 {
        bail!("episodes must be at least 1");
    }
    terrain.validate()?;
    let (ck, hash) = files::load_checkpoint(checkpoint)?;
    let mut agent = ck.to_agent().with_context(|| format!("{}: checkpoint does not fit its architecture", checkpoint.display()))?;
    let mut env_cfg = ck.config.env.clone();
    if let Some(len) = episode_len {
        env_cfg.episode_len = len;
    }
    let env = Environment::new(env_cfg, ck.config.geometry.clone(), Arc::new(terrain.build()?))?;
    let returns = evaluate(&mut agent, &env, episodes, seed)?;
    let sample = Sample::new("eval", returns.clone())?;
    let sd = if returns.len() > 1 { summarize(&sample)?.sd } else { 0.0 };
    Ok(EvalReport {
        controller_id: format!("{}_{}_seed{}", ck.architecture, ck.config.terrain.label(), ck.config.seed),
        architecture: ck.architecture,
        training_seed: ck.config.seed,
        checkpoint_epoch: ck.epoch,
        checkpoint_hash: hash,
        train_terrain: ck.config.terrain.clone(),
        eval_terrain: terrain.clone(),
        eval_seed: seed,
        episode_len: env.config.episode_len,
        episode_seeds: (1..=episodes as u64).map(|i| derive_seed(seed, i)).collect(),
        mean: sample.mean(),
        sd,
        returns,
    })
}

/// Trajectory CSV of one deterministic episode.
pub fn replay(checkpoint: &Path, terrain: &TerrainSpec, episode_seed: u64, episode_len: Option<usize>) -> anyhow::Result<String> {
    terrain.validate()?;
    let (ck, _) = files::load_checkpoint(checkpoint)?;
    let mut agent = ck.to_agent()?;
    let mut env_cfg = ck.config.env.clone();
    if let Some(len) = episode_len {
        env_cfg.episode_len = len;
    }
    let env = Environment::new(env_cfg, ck.config.geometry.clone(), Arc::new(terrain.build()?))?;
    let episode = run_episode(&env, &mut agent.controller(ActMode::Deterministic), episode_seed)?;
    Ok(trajectory_csv(&episode))
}

pub fn terrain_csv(n: u32, roughness: f64, max_height: f64, seed: u64) -> anyhow::Result<String> {
    Ok(diamond_square(n, roughness, max_height, seed)?.to_csv())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsEntry {
    pub index: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsDescription {
    pub architecture: Architecture,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leg: Option<LegId>,
    pub dim: usize,
    pub orientation_dims: usize,
    pub entries: Vec<ObsEntry>,
}

/// Index-to-name tables; decentralized without a leg gives all six.
pub fn describe_obs(architecture: Architecture, leg: Option<LegId>) -> Vec<ObsDescription> {
    let wrap = |leg: Option<LegId>, names: Vec<String>| ObsDescription {
        architecture,
        leg,
        dim: names.len(),
        orientation_dims: ORIENTATION_DIM,
        entries: names.into_iter().enumerate().map(|(index, name)| ObsEntry { index, name }).collect(),
    };
    match architecture {
        Architecture::Centralized => vec![wrap(None, describe_central())],
        Architecture::Decentralized => {
            let topo = NeighborTopology::default();
            let legs: Vec<LegId> = leg.map_or_else(|| LegId::ALL.to_vec(), |l| vec![l]);
            legs.into_iter().map(|l| wrap(Some(l), describe_local(l, &topo))).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerScore {
    pub id: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub provenance: String,
    #[serde(flatten)]
    pub summary: Summary,
    pub controllers: Vec<ControllerScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub group_a: GroupSummary,
    pub group_b: GroupSummary,
    pub t: f64,
    pub df: Option<f64>,
    pub p_welch: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub p_mw: f64,
    pub mw_method: Method,
    pub d: f64,
    pub ranking: Vec<Ranked>,
}

pub fn compare_groups(
    (label_a, prov_a, a): (&str, &str, Vec<ControllerScore>),
    (label_b, prov_b, b): (&str, &str, Vec<ControllerScore>),
) -> anyhow::Result<CompareReport> {
    if a.len() < 2 || b.len() < 2 {
        bail!("each group needs at least two controllers (got {} and {})", a.len(), b.len());
    }
    let sa = Sample::new(label_a, a.iter().map(|c| c.mean).collect())?;
    let sb = Sample::new(label_b, b.iter().map(|c| c.mean).collect())?;
    let welch = welch_t_test(&sa, &sb)?;
    let mw = mann_whitney_u(&sa, &sb)?;
    let d = cohens_d(&sa, &sb)?;
    let entries: Vec<RankEntry> =
        a.iter().chain(&b).map(|c| RankEntry { label: c.id.clone(), mean: c.mean, sd: c.sd }).collect();
    Ok(CompareReport {
        group_a: GroupSummary { label: label_a.into(), provenance: prov_a.into(), summary: summarize(&sa)?, controllers: a },
        group_b: GroupSummary { label: label_b.into(), provenance: prov_b.into(), summary: summarize(&sb)?, controllers: b },
        t: welch.statistic,
        df: welch.degrees_of_freedom,
        p_welch: welch.p_value,
        u: mw.statistic,
        p_mw: mw.p_value,
        mw_method: mw.method,
        d,
        ranking: rank_controllers(&entries),
    })
}

/// The embedded per-seed results: decentralized as group a, centralized as b.
pub fn compare_fixture() -> anyhow::Result<CompareReport> {
    let rows = fixtures::seed_results()?;
    let group = |arch: Architecture| -> Vec<ControllerScore> {
        rows.iter().filter(|r| r.architecture == arch).map(|r| ControllerScore { id: r.label(), mean: r.mean, sd: r.sd }).collect()
    };
    compare_groups(
        ("decentral", fixtures::PROVENANCE, group(Architecture::Decentralized)),
        ("central", fixtures::PROVENANCE, group(Architecture::Centralized)),
    )
}

/// Reads every `*.json` eval report in `dir`, sorted by file name.
pub fn load_reports(dir: &Path) -> anyhow::Result<Vec<EvalReport>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Ok(files::read_json::<EvalReport>(p)?)).collect()
}

pub fn compare_dirs(a: &Path, b: &Path) -> anyhow::Result<CompareReport> {
    let scores = |dir: &Path| -> anyhow::Result<Vec<ControllerScore>> {
        let reports = load_reports(dir)?;
        if reports.is_empty() {
            bail!("{}: no evaluation reports", dir.display());
        }
        Ok(reports.into_iter().map(|r| ControllerScore { id: r.controller_id, mean: r.mean, sd: r.sd }).collect())
    };
    let (sa, sb) = (scores(a)?, scores(b)?);
    let (la, lb) = (a.display().to_string(), b.display().to_string());
    compare_groups((&la, &format!("eval reports in {la}"), sa), (&lb, &format!("eval reports in {lb}"), sb))
}
