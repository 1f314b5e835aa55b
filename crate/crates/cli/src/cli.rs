//! Argument parsing and dispatch for the `ddrl` binary.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddrl_core::agents::Architecture;
use ddrl_core::terrain::{DEFAULT_EXPONENT, DEFAULT_ROUGHNESS};
use ddrl_core::{LegId, TerrainSpec};

use crate::commands;
use crate::config::RunConfig;
use crate::files;

#[derive(Debug, Parser)]
#[command(name = "ddrl", version, about = "Train, evaluate and compare decentralized and centralized hexapod controllers")]
pub struct Cli {
    /// Seed for every random choice the command makes [default: 1].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for multi-seed training.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Root directory for outputs without an explicit path.
    #[arg(long, global = true, env = "DDRL_OUT", default_value = "runs")]
    pub out_root: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Central,
    Decentral,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Central => Architecture::Centralized,
            ArchArg::Decentral => Architecture::Decentralized,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TerrainKind {
    Flat,
    Heightmap,
}

#[derive(Clone, Debug, Args)]
pub struct TerrainArgs {
    #[arg(long, value_enum)]
    pub terrain: Option<TerrainKind>,
    /// Height-map maximum in metres.
    #[arg(long, default_value_t = 0.10)]
    pub max_height: f64,
    /// Height-map seed (defaults to --seed).
    #[arg(long)]
    pub terrain_seed: Option<u64>,
    /// Grid exponent: the map has (2^n + 1)^2 nodes.
    #[arg(long, default_value_t = DEFAULT_EXPONENT)]
    pub terrain_n: u32,
    #[arg(long, default_value_t = DEFAULT_ROUGHNESS)]
    pub roughness: f64,
}

impl TerrainArgs {
    fn spec(&self, seed: u64) -> Option<TerrainSpec> {
        self.terrain.map(|k| match k {
            TerrainKind::Flat => TerrainSpec::Flat,
            TerrainKind::Heightmap => TerrainSpec::Heightmap {
                max_height: self.max_height,
                seed: self.terrain_seed.unwrap_or(seed),
                n: self.terrain_n,
                roughness: self.roughness,
            },
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train controllers; writes config.json, curve.csv and checkpoints.
    Train {
        #[arg(long, value_enum)]
        arch: Option<ArchArg>,
        /// JSON run config; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        terrain: TerrainArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        episode_len: Option<usize>,
        /// Train several seeds (comma separated) instead of --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Output directory (single seed) or root (several seeds).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        terrain: TerrainArgs,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        episode_len: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two groups of evaluation reports, or the embedded reference results.
    Compare {
        #[arg(long, required_unless_present = "fixture")]
        a: Option<PathBuf>,
        #[arg(long, required_unless_present = "fixture")]
        b: Option<PathBuf>,
        /// Use the embedded per-seed results (decentral vs central).
        #[arg(long, conflicts_with_all = ["a", "b"])]
        fixture: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a diamond-square height map CSV.
    Terrain {
        #[arg(long, default_value_t = DEFAULT_EXPONENT)]
        n: u32,
        #[arg(long, default_value_t = DEFAULT_ROUGHNESS)]
        roughness: f64,
        #[arg(long)]
        max_height: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the index-to-name table of the observation vectors.
    DescribeObs {
        #[arg(long, value_enum)]
        arch: ArchArg,
        #[arg(long)]
        leg: Option<LegId>,
    },
    /// Export the trajectory of one deterministic episode as CSV.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        terrain: TerrainArgs,
        #[arg(long)]
        episode_len: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => Ok(files::write_file(path, bytes)?),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).context("writing to stdout")
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed.unwrap_or(1);
    match cli.command {
        Command::Train { arch, config, terrain, epochs, episode_len, seeds, out } => {
            let mut cfg = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let mut cfg = RunConfig::from_json(&text)?;
                    if let Some(a) = arch {
                        cfg.architecture = a.into();
                    }
                    cfg
                }
                None => RunConfig::new(arch.context("--arch or --config is required")?.into()),
            };
            // a config file seed is kept unless --seed is given explicitly
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(t) = terrain.spec(cfg.seed) {
                cfg.terrain = t;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(len) = episode_len {
                cfg.env.episode_len = len;
            }
            cfg.validate()?;
            if seeds.is_empty() {
                let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| cli.out_root.join(cfg.run_name()));
                let r = commands::train_run(&cfg, &dir)?;
                let last = r.output.curve.last().expect("at least one epoch");
                eprintln!(
                    "{}: {} epochs, final return {:.3}, mean_100 {:.3}",
                    dir.display(),
                    last.epoch,
                    last.episode_return,
                    last.mean_100
                );
            } else {
                let root = out.unwrap_or(cli.out_root);
                for r in commands::train_seeds(&cfg, &seeds, &root, cli.jobs)? {
                    let last = r.output.curve.last().expect("at least one epoch");
                    eprintln!("{}: mean_100 {:.3}", r.out_dir.display(), last.mean_100);
                }
            }
        }
        Command::Eval { checkpoint, terrain, episodes, episode_len, out } => {
            let spec = terrain.spec(seed).unwrap_or(TerrainSpec::Flat);
            let report = commands::eval_checkpoint(&checkpoint, &spec, episodes, seed, episode_len)?;
            let path = out.unwrap_or_else(|| {
                cli.out_root.join("eval").join(format!("{}_on_{}.json", report.controller_id, spec.label()))
            });
            files::write_file(&path, &files::to_json_pretty(&report))?;
            eprintln!("{}: mean {:.3} sd {:.3} over {} episodes", path.display(), report.mean, report.sd, episodes);
        }
        Command::Compare { a, b, fixture, out } => {
            let report = if fixture {
                commands::compare_fixture()?
            } else {
                let (a, b) = (a.expect("required by clap"), b.expect("required by clap"));
                commands::compare_dirs(&a, &b)?
            };
            emit(out.as_deref(), &files::to_json_pretty(&report))?;
        }
        Command::Terrain { n, roughness, max_height, out } => {
            let csv = commands::terrain_csv(n, roughness, max_height, seed)?;
            emit(out.as_deref(), csv.as_bytes())?;
        }
        Command::DescribeObs { arch, leg } => {
            let tables = commands::describe_obs(arch.into(), leg);
            let bytes = if tables.len() == 1 { files::to_json_pretty(&tables[0]) } else { files::to_json_pretty(&tables) };
            emit(None, &bytes)?;
        }
        Command::Replay { checkpoint, terrain, episode_len, out } => {
            let spec = terrain.spec(seed).unwrap_or(TerrainSpec::Flat);
            let csv = commands::replay(&checkpoint, &spec, seed, episode_len)?;
            emit(out.as_deref(), csv.as_bytes())?;
        }
    }
    Ok(())
}
