mod artifacts;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use olsynth::config::{Config, ConfigError};
use olsynth::online::{GpMode, Metrics};
use olsynth::pipeline::PipelineError;

use artifacts::MissingFile;

#[derive(Parser)]
#[command(name = "olsynth", version, about = "Offline-online controller synthesis from data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every omitted field takes its default.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn the GPs, build the abstraction and product, synthesize the offline strategy.
    OfflineSynth {
        #[command(flatten)]
        common: Common,
    },
    /// Run one online episode.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Directory written by offline-synth; defaults to --out.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Initial state, comma separated; defaults to the first configured start.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value = "local-update")]
        mode: GpMode,
        #[arg(long, default_value = "sink+prog")]
        metrics: Metrics,
        /// Episode index selecting the noise stream.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Monte Carlo over every configured start, metric set and GP mode.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Directory written by offline-synth; without it the offline stage runs in memory.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Overrides the configured episode count.
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write every trajectory with per-step scores.
        #[arg(long)]
        trajectories: bool,
    },
    /// Print the automaton of a formula.
    Dfa {
        /// Formula text, e.g. "G(!O) & F(D1) & F(D2)".
        #[arg(long)]
        formula: Option<String>,
        /// Atomic propositions in symbol-bit order, comma separated.
        #[arg(long, value_delimiter = ',')]
        props: Option<Vec<String>>,
        /// Take formula and propositions from a configuration instead.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Validate an IMDP or PIMDP JSON file.
    CheckModel { file: PathBuf },
}

fn load_config(c: &Common) -> Result<Config> {
    let mut cfg = Config::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.check_files()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::OfflineSynth { common } => {
            let cfg = load_config(&common)?;
            artifacts::offline_synth(&cfg, &common.out)
        }
        Cmd::Simulate { common, artifacts: dir, x0, mode, metrics, run } => {
            let cfg = load_config(&common)?;
            let dir = dir.unwrap_or_else(|| common.out.clone());
            let x0 = match x0 {
                Some(x) => x,
                None => cfg.simulation.starts.first().cloned().context("no --x0 and no configured start")?,
            };
            artifacts::simulate(&cfg, &dir, &common.out, &x0, mode, metrics, run)
        }
        Cmd::Benchmark { common, artifacts: dir, episodes, trajectories } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = episodes {
                cfg.simulation.episodes = e;
            }
            artifacts::benchmark(&cfg, dir.as_deref(), &common.out, trajectories)
        }
        Cmd::Dfa { formula, props, config, json } => {
            let (formula, props) = match (formula, config) {
                (Some(f), _) => (f, props.unwrap_or_default()),
                (None, Some(path)) => {
                    let cfg = Config::load(&path)?;
                    (cfg.spec.formula.clone(), props.unwrap_or_else(|| cfg.props()))
                }
                (None, None) => bail!("give --formula or --config"),
            };
            artifacts::print_dfa(&formula, &props, json)
        }
        Cmd::CheckModel { file } => artifacts::check_model(&file),
    }
}

fn is_missing_file(e: &anyhow::Error) -> Option<&Path> {
    e.chain().find_map(|c| {
        if let Some(MissingFile(p)) = c.downcast_ref::<MissingFile>() {
            return Some(p.as_path());
        }
        match c.downcast_ref::<ConfigError>() {
            Some(ConfigError::MissingFile(p)) => Some(p.as_path()),
            _ => match c.downcast_ref::<PipelineError>() {
                Some(PipelineError::Config(ConfigError::MissingFile(p))) => Some(p.as_path()),
                _ => None,
            },
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(p) = is_missing_file(&e) {
                eprintln!("error: file not found: {}", p.display());
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
