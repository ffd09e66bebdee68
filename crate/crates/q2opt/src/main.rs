use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use q2opt::config::{ExperimentConfig, Recipe, RunMode};
use q2opt::generate::{generate_dataset, PolicySpec, REPLAY_FILE};
use q2opt::metrics::{plot_csv, plot_export, write_csv, Clock, METRICS_FILE};
use q2opt::pipeline::{evaluate_greedy, run_offline, run_online, Agent, EvalReport};
use q2opt::{checkpoint, dataset};
use q2opt_core::risk::RiskMetric;

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const CONFIG_FILE: &str = "config.toml";
const EVAL_FILE: &str = "eval.json";

#[derive(Parser)]
#[command(
    name = "q2opt",
    version,
    about = "Distributional QT-Opt experiments on a grasping simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed (per recipe variant) and write run directories.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the seed list of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        risk: Option<RiskMetric>,
        /// Online episode budget.
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, value_enum)]
        recipe: Option<Recipe>,
        /// Record the wall clock in metrics instead of zeros.
        #[arg(long)]
        wall_clock: bool,
    },
    /// Greedy evaluation of a checkpoint on fresh episodes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the config stored next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: u64,
        #[arg(long)]
        risk: Option<RiskMetric>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an episode dataset for batch training.
    GenDataset {
        #[arg(long, value_enum, default_value = "scripted")]
        policy: PolicyKind,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Parameters for `--policy snapshot`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Run directory for `--policy replay`.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge run metrics into one long-format CSV.
    PlotExport {
        runs: Vec<PathBuf>,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the reference configuration with every default.
    PrintConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Scripted,
    Snapshot,
    Replay,
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": ").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    Ok(ExperimentConfig::load(path)?)
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Train {
            config,
            seed,
            risk,
            episodes,
            out,
            recipe,
            wall_clock,
        } => {
            let mut base = load_config(&config)?;
            if let Some(s) = seed {
                base.seeds = vec![s];
            }
            if let Some(r) = risk {
                base.run.risk = r;
            }
            if let Some(n) = episodes {
                base.run.max_episodes = n;
            }
            let variants = match recipe {
                Some(r) => r
                    .variants(&base)
                    .into_iter()
                    .map(|v| (Some(v.name), v.config))
                    .collect(),
                None => vec![(None, base)],
            };
            for (name, cfg) in variants {
                cfg.validate()?;
                let root = match &name {
                    Some(n) => out.join(n),
                    None => out.clone(),
                };
                for &s in &cfg.seeds {
                    let dir = root.join(format!("seed-{s}"));
                    train_one(&cfg, s, &dir, wall_clock)?;
                }
            }
            Ok(())
        }
        Command::Eval {
            checkpoint: ckpt,
            config,
            episodes,
            risk,
            seed,
            out,
        } => {
            if episodes == 0 {
                bail!("--episodes must be at least 1");
            }
            let config = config.unwrap_or_else(|| ckpt.with_file_name(CONFIG_FILE));
            let cfg = load_config(&config)?;
            let mut agent = Agent::from_config(&cfg)?;
            if let Some(r) = risk {
                agent = agent.with_risk(r)?;
            }
            let params = checkpoint::load_for(&ckpt, &agent.network)?;
            let r = evaluate_greedy(&agent, &cfg.sim, &params, seed, episodes as usize)?;
            let report = serde_json::to_string_pretty(&EvalReport::pooled(vec![r]))?;
            println!("{report}");
            if let Some(p) = out {
                write(&p, report + "\n")?;
            }
            Ok(())
        }
        Command::GenDataset {
            policy,
            config,
            checkpoint: ckpt,
            run,
            epsilon,
            episodes,
            seed,
            out,
        } => {
            let cfg = match &config {
                Some(p) => load_config(p)?,
                None => ExperimentConfig::default(),
            };
            let summary = match policy {
                PolicyKind::Scripted => {
                    generate_dataset(&PolicySpec::Scripted, episodes, &cfg.sim, seed, &out)?
                }
                PolicyKind::Snapshot => {
                    let Some(ckpt) = ckpt else {
                        bail!("--policy snapshot needs --checkpoint");
                    };
                    let cfg = match config {
                        Some(_) => cfg,
                        None => load_config(&ckpt.with_file_name(CONFIG_FILE))?,
                    };
                    let agent = Agent::from_config(&cfg)?;
                    let params = checkpoint::load_for(&ckpt, &agent.network)?;
                    let spec = PolicySpec::Snapshot {
                        agent: &agent,
                        params: &params,
                        epsilon,
                    };
                    generate_dataset(&spec, episodes, &cfg.sim, seed, &out)?
                }
                PolicyKind::Replay => {
                    let Some(run_dir) = run else {
                        bail!("--policy replay needs --run");
                    };
                    generate_dataset(&PolicySpec::Replay { run_dir }, 0, &cfg.sim, seed, &out)?
                }
            };
            println!(
                "{} episodes, {} transitions, success rate {:.4}",
                summary.episodes,
                summary.transitions,
                summary.success_rate()
            );
            Ok(())
        }
        Command::PlotExport { runs, out } => {
            let rows = plot_export(&runs)?;
            let bytes = plot_csv(&rows)?;
            match out {
                Some(p) => write(&p, bytes),
                None => {
                    print!("{}", String::from_utf8(bytes)?);
                    Ok(())
                }
            }
        }
        Command::PrintConfig { out } => {
            let text = ExperimentConfig::reference_toml();
            match out {
                Some(p) => write(&p, text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn train_one(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    wall_clock: bool,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut cfg = cfg.clone();
    cfg.seeds = vec![seed];
    write(&dir.join(CONFIG_FILE), cfg.to_toml())?;
    let clock = if wall_clock {
        Clock::start_wall()
    } else {
        Clock::Frozen
    };
    let outcome = match cfg.run.mode {
        RunMode::Online => run_online(&cfg, seed, clock)?,
        RunMode::Offline => run_offline(&cfg, seed, clock)?,
    };
    write_csv(&dir.join(METRICS_FILE), &outcome.metrics)?;
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &outcome.params)?;
    write(
        &dir.join(EVAL_FILE),
        serde_json::to_string_pretty(&outcome.final_eval)? + "\n",
    )?;
    if cfg.run.record_episodes {
        dataset::write_dataset(&dir.join(REPLAY_FILE), &outcome.episodes)?;
    }
    println!(
        "{}: {} steps, {} episodes, final success {:.4}",
        dir.display(),
        outcome.global_step,
        outcome.env_episodes,
        outcome.final_eval.success_rate
    );
    Ok(())
}
