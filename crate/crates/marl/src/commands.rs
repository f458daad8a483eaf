use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use marl_core::graph::{build_graph, decompose as decompose_graph};
use marl_core::rl::{
    run_episode, run_episode_observed, BatchSummary, EnsembleMode, EpisodeResult, EpisodeStats, PolicyNet,
    TeamLearner, TeamPolicy, Trainer, UpdateTiming,
};
use marl_core::{GridWorld, Scenario, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::{Opponent, RunConfig};
use crate::metrics::{MetricsRow, MetricsWriter};
use crate::render::{Frame, FrameHeader};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const FRAMES_FILE: &str = "frames.jsonl";

pub fn new_trainer(cfg: &RunConfig) -> Result<Trainer> {
    Ok(Trainer::new(
        cfg.scenario_config(),
        cfg.trainer_config(),
        cfg.network_config(),
        &cfg.trained_teams(),
        cfg.run.seed,
    )?)
}

/// One batch, with the episodes spread over the rayon pool when `parallel`
/// is set. Per-step updates are inherently sequential.
pub fn train_batch(t: &mut Trainer, parallel: bool) -> Result<BatchSummary> {
    if !parallel || t.config.update == UpdateTiming::Step {
        return Ok(t.train_batch()?);
    }
    let batch = t.batches_done;
    let trainer = &*t;
    let results = (0..t.config.batch_episodes as u64)
        .into_par_iter()
        .map(|e| trainer.run_training_episode(batch, e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(t.apply_batch(results)?)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub summaries: Vec<BatchSummary>,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
}

pub fn train(cfg: &RunConfig, log: &mut dyn Write) -> Result<TrainReport> {
    cfg.validate()?;
    let mut trainer = new_trainer(cfg)?;
    let dir = &cfg.run.output_dir;
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(Error::io(&config_path))?;
    let metrics = dir.join(METRICS_FILE);
    let mut writer = MetricsWriter::create(&metrics)?;
    let start = Instant::now();
    let mut summaries = Vec::new();
    for b in 0..cfg.run.batches {
        let s = train_batch(&mut trainer, cfg.run.parallel)?;
        let seconds = cfg.run.wall_clock.then(|| start.elapsed().as_secs_f64());
        for row in MetricsRow::from_summary(&s, seconds) {
            writer.write(&row)?;
        }
        writer.flush()?;
        if (b + 1) % cfg.run.metrics_every == 0 {
            print_summary(log, &s).map_err(Error::io(Path::new("<log>")))?;
        }
        if cfg.run.checkpoint_every > 0 && (b + 1) % cfg.run.checkpoint_every == 0 {
            Checkpoint::from_trainer(&trainer).save(&dir.join(format!("checkpoint_{:05}.bin", b + 1)))?;
        }
        summaries.push(s);
    }
    let checkpoint = dir.join(CHECKPOINT_FILE);
    Checkpoint::from_trainer(&trainer).save(&checkpoint)?;
    Ok(TrainReport {
        summaries,
        metrics,
        checkpoint,
    })
}

fn print_summary(log: &mut dyn Write, s: &BatchSummary) -> std::io::Result<()> {
    write!(
        log,
        "batch {:>4}  sub-graphs {:>6} (mean size {:.2})",
        s.batch, s.subgraphs, s.mean_subgraph_size
    )?;
    for t in &s.teams {
        write!(log, "  | team {} reward {:.3}", t.team, t.mean_reward)?;
        if let Some(w) = t.win_rate {
            write!(log, " win {:.3}", w)?;
        }
        if let Some(lr) = t.lr {
            write!(log, " lr {:.5}", lr)?;
        }
    }
    writeln!(log)
}

/// Same layout with `agents` (the config's per-team meaning) and the grid
/// area, foods and walls scaled to keep the density of `base`.
pub fn scale_scenario(base: &ScenarioConfig, agents: usize) -> ScenarioConfig {
    let mut s = base.clone();
    s.agents = agents;
    if agents == base.agents {
        return s;
    }
    let ratio = s.total_agents() as f64 / base.total_agents() as f64;
    let side = ratio.sqrt();
    s.width = ((base.width as f64 * side).ceil() as usize).max(5);
    s.height = ((base.height as f64 * side).ceil() as usize).max(5);
    s.foods = (base.foods as f64 * ratio).round() as usize;
    s.walls = (base.walls as f64 * ratio).round() as usize;
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamEval {
    pub team: u8,
    pub mean_reward: f64,
    /// Ties count one half; `None` for Jungle.
    pub win_rate: Option<f64>,
    pub mean_alive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub scenario: ScenarioConfig,
    /// Empty when no episode ran.
    pub teams: Vec<TeamEval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub agents: Option<usize>,
    pub opponent: Opponent,
    pub seed: u64,
}

fn team_policy<'a>(t: &'a Trainer, l: Option<&'a TeamLearner>) -> TeamPolicy<'a> {
    match (l, &t.policy_net) {
        (None, _) => TeamPolicy::Uniform,
        (Some(l), PolicyNet::Graph(net)) => TeamPolicy::Graph { net, params: &l.policy },
        (Some(l), PolicyNet::Mlp(net)) => TeamPolicy::Mlp { net, params: &l.policy },
    }
}

/// Team 0 runs its own parameters. Against `SelfPlay` every other team runs
/// its own parameters, or team 0's when it has none.
pub fn eval_policies(t: &Trainer, opponent: Opponent) -> Vec<TeamPolicy<'_>> {
    let own = t.learners.first().and_then(|l| l.as_ref());
    (0..t.learners.len())
        .map(|i| match (i, opponent) {
            (0, _) => team_policy(t, own),
            (_, Opponent::Random) => TeamPolicy::Uniform,
            (_, Opponent::SelfPlay) => team_policy(t, t.learners[i].as_ref().or(own)),
        })
        .collect()
}

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Frozen-policy episodes with argmax ensembling.
pub fn eval(trainer: &Trainer, opts: &EvalOptions) -> Result<EvalSummary> {
    let scenario = match opts.agents {
        Some(n) => scale_scenario(&trainer.scenario, n),
        None => trainer.scenario.clone(),
    };
    scenario.validate().map_err(|e| Error::Config(e.to_string()))?;
    let policies = eval_policies(trainer, opts.opponent);
    let ropts = trainer.rollout_options(EnsembleMode::Argmax, false);
    let stats = (0..opts.episodes as u64)
        .map(|e| {
            let mut rng = episode_rng(opts.seed, e);
            let mut world = GridWorld::new(scenario.clone(), &mut rng)?;
            run_episode(&mut world, &policies, &ropts, &mut rng).map(|ep| ep.stats)
        })
        .collect::<Result<Vec<EpisodeStats>, _>>()?;
    let n = stats.len() as f64;
    let teams = match stats.first() {
        None => Vec::new(),
        Some(first) => (0..first.teams.len())
            .map(|t| {
                let wins: Vec<f64> = stats.iter().filter_map(|s| s.teams[t].win).collect();
                TeamEval {
                    team: t as u8,
                    mean_reward: stats.iter().map(|s| s.teams[t].mean_return).sum::<f64>() / n,
                    win_rate: (!wins.is_empty()).then(|| wins.iter().sum::<f64>() / wins.len() as f64),
                    mean_alive: stats.iter().map(|s| s.teams[t].alive as f64).sum::<f64>() / n,
                }
            })
            .collect(),
    };
    Ok(EvalSummary {
        episodes: stats.len(),
        scenario,
        teams,
    })
}

pub fn format_eval(s: &EvalSummary) -> String {
    let mut out = format!(
        "episodes {}  grid {}x{}  agents {}\nteam,mean_reward,win_rate,mean_alive\n",
        s.episodes,
        s.scenario.width,
        s.scenario.height,
        s.scenario.total_agents()
    );
    for t in &s.teams {
        let win = t.win_rate.map(|w| format!("{w:.4}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:.4},{},{:.3}", t.team, t.mean_reward, win, t.mean_alive);
    }
    out
}

pub const DEFAULT_BENCH_COUNTS: [usize; 4] = [10, 100, 1000, 10000];
/// Rough upper bound of memory held per recorded agent-step.
pub const BENCH_BYTES_PER_AGENT_STEP: u64 = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub episodes: usize,
    pub memory_limit: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            episodes: 100,
            memory_limit: 4 << 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub agents: usize,
    pub width: usize,
    pub height: usize,
    pub foods: usize,
    pub episodes: usize,
    pub seconds: f64,
}

/// Scenario for `n` agents (per-team meaning) at the cell-per-agent density
/// of `base`; Jungle gets one food per four agents.
pub fn bench_scenario(base: &ScenarioConfig, n: usize) -> ScenarioConfig {
    let mut s = base.clone();
    s.agents = n;
    let cells_per_agent = (base.width * base.height) as f64 / base.total_agents() as f64;
    let side = ((s.total_agents() as f64 * cells_per_agent).sqrt().ceil() as usize).max(5);
    s.width = side;
    s.height = side;
    s.walls = (base.walls as f64 * s.total_agents() as f64 / base.total_agents() as f64).round() as usize;
    if s.scenario == Scenario::Jungle {
        s.foods = n.div_ceil(4);
    }
    s
}

/// Wall-clock seconds of `opts.episodes` training episodes (rollout,
/// gradients and optimiser steps) per agent count. World construction is
/// not timed.
pub fn bench(cfg: &RunConfig, counts: &[usize], opts: &BenchOptions, log: &mut dyn Write) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Config("agent counts must be at least 1".into()));
    }
    if opts.episodes == 0 {
        return Err(Error::Config("bench needs at least one episode".into()));
    }
    let mut seen = BTreeSet::new();
    let mut unique = Vec::new();
    for &n in counts {
        if seen.insert(n) {
            unique.push(n);
        } else {
            writeln!(log, "warning: duplicate agent count {n} ignored").map_err(Error::io(Path::new("<log>")))?;
        }
    }
    let base = cfg.scenario_config();
    let scenarios: Vec<ScenarioConfig> = unique.iter().map(|&n| bench_scenario(&base, n)).collect();
    for s in &scenarios {
        let need = s.total_agents() as u64 * s.episode_limit as u64 * BENCH_BYTES_PER_AGENT_STEP;
        if need > opts.memory_limit {
            return Err(Error::Resource(format!(
                "{} agents x {} steps needs about {} MiB, limit is {} MiB",
                s.total_agents(),
                s.episode_limit,
                need >> 20,
                opts.memory_limit >> 20
            )));
        }
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let batch = cfg.trainer.batch_episodes;
    scenarios
        .into_iter()
        .map(|s| {
            let mut run = cfg.clone();
            run.scenario.width = s.width;
            run.scenario.height = s.height;
            run.scenario.agents = s.agents;
            run.scenario.foods = s.foods;
            run.scenario.walls = s.walls;
            let mut t = new_trainer(&run)?;
            let ropts = t.rollout_options(EnsembleMode::Sample, true);
            let mut timed = Duration::ZERO;
            let mut pending: Vec<EpisodeResult> = Vec::new();
            for e in 0..opts.episodes {
                let mut rng = ChaCha8Rng::seed_from_u64(t.episode_seed(t.batches_done, e as u64));
                let mut world = GridWorld::new(s.clone(), &mut rng)?;
                let start = Instant::now();
                let ep = run_episode(&mut world, &t.policies(), &ropts, &mut rng)?;
                pending.push(EpisodeResult {
                    grads: t.gradients(&ep)?,
                    stats: ep.stats,
                });
                if pending.len() == batch || e + 1 == opts.episodes {
                    t.apply_batch(std::mem::take(&mut pending))?;
                }
                timed += start.elapsed();
            }
            let row = BenchRow {
                agents: s.total_agents(),
                width: s.width,
                height: s.height,
                foods: s.foods,
                episodes: opts.episodes,
                seconds: timed.as_secs_f64(),
            };
            writeln!(
                log,
                "{},{},{},{},{},{:.4}",
                row.agents, row.width, row.height, row.foods, row.episodes, row.seconds
            )
            .map_err(Error::io(Path::new("<log>")))?;
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderReport {
    pub frames: usize,
    pub images: Vec<PathBuf>,
}

/// Argmax episodes, writing one JSON frame and one PPM image per step.
pub fn render(trainer: &Trainer, episodes: usize, seed: u64, out_dir: &Path) -> Result<RenderReport> {
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let frames_path = out_dir.join(FRAMES_FILE);
    let mut frames = BufWriter::new(File::create(&frames_path).map_err(Error::io(&frames_path))?);
    serde_json::to_writer(&mut frames, &FrameHeader::default())?;
    writeln!(frames).map_err(Error::io(&frames_path))?;
    let policies = eval_policies(trainer, Opponent::SelfPlay);
    let ropts = trainer.rollout_options(EnsembleMode::Argmax, false);
    let mut report = RenderReport {
        frames: 0,
        images: Vec::new(),
    };
    for e in 0..episodes as u64 {
        let mut rng = episode_rng(seed, e);
        let mut world = GridWorld::new(trainer.scenario.clone(), &mut rng)?;
        let mut failure: Option<Error> = None;
        let mut observer = |w: &GridWorld, out: Option<&marl_core::gridworld::StepOutcome>| {
            let Some(out) = out else { return };
            if failure.is_some() {
                return;
            }
            let frame = Frame::capture(w, e, &out.rewards, out.done);
            let image = out_dir.join(format!("ep{:03}_t{:04}.ppm", e, frame.time));
            let written = serde_json::to_writer(&mut frames, &frame)
                .map_err(Error::from)
                .and_then(|_| writeln!(frames).map_err(Error::io(&frames_path)))
                .and_then(|_| {
                    let mut f = BufWriter::new(File::create(&image).map_err(Error::io(&image))?);
                    frame.write_ppm(&mut f).and_then(|_| f.flush()).map_err(Error::io(&image))
                });
            match written {
                Ok(()) => {
                    report.frames += 1;
                    report.images.push(image);
                }
                Err(err) => failure = Some(err),
            }
        };
        run_episode_observed(&mut world, &policies, &ropts, &mut rng, &mut observer)?;
        if let Some(err) = failure {
            return Err(err);
        }
    }
    frames.flush().map_err(Error::io(&frames_path))?;
    Ok(report)
}

/// Text dump of every sub-graph of one freshly built world.
pub fn decompose(cfg: &RunConfig, seed: u64, depth: Option<usize>) -> Result<String> {
    cfg.validate()?;
    let depth = depth.unwrap_or(cfg.trainer.depth);
    if depth == 0 {
        return Err(Error::Config("depth must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = GridWorld::new(cfg.scenario_config(), &mut rng)?;
    let graph = build_graph(&world)?;
    let subs = decompose_graph(&graph, depth, &cfg.network_config().encoding)?;
    let mut out = format!(
        "{} agents, {} edges, {} sub-graphs at depth {}\n",
        graph.len(),
        graph.edges().len(),
        subs.len(),
        depth
    );
    for sg in &subs {
        let members: Vec<String> = sg.members.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(out, "\nsubgraph centre {}", sg.centre);
        let _ = writeln!(out, "  members {}", members.join(" "));
        for e in &sg.edges {
            let _ = writeln!(out, "  edge {} -> {} d={:.6}", sg.members[e.src], sg.members[e.dst], e.distance);
        }
    }
    Ok(out)
}
