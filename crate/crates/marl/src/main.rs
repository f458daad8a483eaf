use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use marl::commands::{self, BenchOptions, EvalOptions, DEFAULT_BENCH_COUNTS};
use marl::config::Opponent;
use marl::{Checkpoint, Error, RunConfig};

#[derive(Parser)]
#[command(name = "marl", version, about = "Sub-graph decomposed multi-agent actor-critic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per the config; writes metrics.csv and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run the episodes of each batch one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Evaluate a checkpoint with argmax ensembling.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Agent count in the config's per-team sense; the grid is resized to keep density.
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long, value_enum, default_value = "self")]
        opponent: Opponent,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time training episodes at increasing agent counts.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        episode_limit: Option<u32>,
        #[arg(long, default_value_t = 4096)]
        memory_limit_mib: u64,
    },
    /// Dump per-step frames and images of argmax episodes.
    Render {
        #[arg(long)]
        config: PathBuf,
        /// Freshly initialised parameters when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the sub-graphs of one freshly built world.
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        depth: Option<usize>,
    },
}

fn trainer_for(cfg: &RunConfig, checkpoint: Option<&PathBuf>) -> marl::Result<marl_core::rl::Trainer> {
    match checkpoint {
        Some(p) => Checkpoint::load(p)?.into_trainer(cfg),
        None => commands::new_trainer(cfg),
    }
}

fn run(cli: Cli) -> marl::Result<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Train {
            config,
            seed,
            batches,
            output_dir,
            sequential,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(b) = batches {
                cfg.run.batches = b;
            }
            if let Some(d) = output_dir {
                cfg.run.output_dir = d;
            }
            if sequential {
                cfg.run.parallel = false;
            }
            let report = commands::train(&cfg, &mut out)?;
            println!("metrics {}\ncheckpoint {}", report.metrics.display(), report.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            config,
            episodes,
            agents,
            opponent,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let trainer = trainer_for(&cfg, Some(&checkpoint))?;
            let summary = commands::eval(
                &trainer,
                &EvalOptions {
                    episodes,
                    agents,
                    opponent,
                    seed,
                },
            )?;
            print!("{}", commands::format_eval(&summary));
        }
        Command::Bench {
            config,
            counts,
            episodes,
            episode_limit,
            memory_limit_mib,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(l) = episode_limit {
                cfg.scenario.episode_limit = Some(l);
            }
            let counts = counts.unwrap_or_else(|| DEFAULT_BENCH_COUNTS.to_vec());
            let opts = BenchOptions {
                episodes,
                memory_limit: memory_limit_mib << 20,
            };
            println!("agents,width,height,foods,episodes,seconds");
            commands::bench(&cfg, &counts, &opts, &mut out)?;
        }
        Command::Render {
            config,
            checkpoint,
            episodes,
            out: dir,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let trainer = trainer_for(&cfg, checkpoint.as_ref())?;
            let report = commands::render(&trainer, episodes, seed, &dir)?;
            println!("{} frames written to {}", report.frames, dir.display());
        }
        Command::Decompose { config, seed, depth } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", commands::decompose(&cfg, seed, depth)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
