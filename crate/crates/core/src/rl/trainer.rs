use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::update::ac_step_gradients;
use super::{
    ac_gradients, graph_pg_gradients, run_episode, vanilla_pg_gradients, Algorithm, EnsembleMode, Episode,
    EpisodeStats, RolloutOptions, TeamGrads, TeamPolicy, TrainerConfig, UpdateTiming,
};
use crate::graph::EdgeEncoding;
use crate::gridworld::{GridWorld, ScenarioConfig};
use crate::nn::{adam_step, AdamState, MessagePassingNet, Mlp, Params, PlateauSchedule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub rounds: usize,
    pub encoding: EdgeEncoding,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            rounds: 2,
            encoding: EdgeEncoding::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("at least one message-passing round is required".into()));
        }
        if !(self.encoding.delta_d > 0.0) || self.encoding.n_max == 0 {
            return Err(Error::Config("delta_d must be positive and n_max at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyNet {
    Graph(MessagePassingNet),
    Mlp(Mlp),
}

impl PolicyNet {
    pub fn num_params(&self) -> usize {
        match self {
            PolicyNet::Graph(n) => n.num_params(),
            PolicyNet::Mlp(n) => n.num_params(),
        }
    }
}

/// Parameters and optimiser state of one trained team.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamLearner {
    pub policy: Params,
    pub policy_adam: AdamState,
    pub critic: Option<Params>,
    pub critic_adam: Option<AdamState>,
    pub schedule: PlateauSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Indexed by team; `None` for teams that are not trained.
    pub grads: Vec<Option<TeamGrads>>,
    pub stats: EpisodeStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamSummary {
    pub team: u8,
    pub mean_reward: f64,
    pub win_rate: Option<f64>,
    /// Policy learning rate after the schedule update; `None` for untrained teams.
    pub lr: Option<f64>,
    pub mean_alive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub batch: u64,
    pub episodes: usize,
    pub teams: Vec<TeamSummary>,
    pub subgraphs: usize,
    pub mean_subgraph_size: f64,
}

/// Team-shared parameters for every trained team plus the batch loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub scenario: ScenarioConfig,
    pub config: TrainerConfig,
    pub network: NetworkConfig,
    pub policy_net: PolicyNet,
    pub critic_net: Option<MessagePassingNet>,
    /// Indexed by team; `None` for teams that act uniformly at random.
    pub learners: Vec<Option<TeamLearner>>,
    pub seed: u64,
    pub batches_done: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Trainer {
    /// `trained[t]` selects whether team `t` learns; the others act uniformly.
    pub fn new(
        scenario: ScenarioConfig,
        config: TrainerConfig,
        network: NetworkConfig,
        trained: &[bool],
        seed: u64,
    ) -> Result<Self> {
        scenario.validate()?;
        config.validate()?;
        network.validate()?;
        if trained.len() != scenario.num_teams() {
            return Err(Error::Config(alloc::format!(
                "{} trained flags for {} teams",
                trained.len(),
                scenario.num_teams()
            )));
        }
        let (policy_net, critic_net) = Self::nets(&config, &network);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
        let learners = trained
            .iter()
            .map(|&on| {
                on.then(|| {
                    let policy = match &policy_net {
                        PolicyNet::Graph(n) => n.init_params(&mut rng),
                        PolicyNet::Mlp(n) => n.init_params(&mut rng),
                    };
                    let critic = critic_net.as_ref().map(|c| c.init_params(&mut rng));
                    TeamLearner {
                        policy_adam: AdamState::new(policy.len(), config.lr_policy),
                        critic_adam: critic.as_ref().map(|c| AdamState::new(c.len(), config.lr_critic)),
                        policy,
                        critic,
                        schedule: PlateauSchedule::default(),
                    }
                })
            })
            .collect();
        Ok(Self {
            scenario,
            config,
            network,
            policy_net,
            critic_net,
            learners,
            seed,
            batches_done: 0,
        })
    }

    /// Network shapes implied by a configuration.
    pub fn nets(config: &TrainerConfig, network: &NetworkConfig) -> (PolicyNet, Option<MessagePassingNet>) {
        let (h, e, r) = (network.hidden, network.encoding.n_max, network.rounds);
        match config.algorithm {
            Algorithm::VanillaPg => (PolicyNet::Mlp(Mlp::policy(h)), None),
            Algorithm::GraphPg => (PolicyNet::Graph(MessagePassingNet::policy(h, e, r)), None),
            Algorithm::GraphAc => (
                PolicyNet::Graph(MessagePassingNet::policy(h, e, r)),
                Some(MessagePassingNet::critic(h, e, r)),
            ),
        }
    }

    pub fn episode_seed(&self, batch: u64, episode: u64) -> u64 {
        splitmix(splitmix(splitmix(self.seed) ^ batch) ^ episode.wrapping_mul(0xD6E8_FEB8_6659_FD93))
    }

    pub fn policies(&self) -> Vec<TeamPolicy<'_>> {
        self.learners
            .iter()
            .map(|l| match l {
                None => TeamPolicy::Uniform,
                Some(l) => match &self.policy_net {
                    PolicyNet::Graph(net) => TeamPolicy::Graph {
                        net,
                        params: &l.policy,
                    },
                    PolicyNet::Mlp(net) => TeamPolicy::Mlp {
                        net,
                        params: &l.policy,
                    },
                },
            })
            .collect()
    }

    pub fn rollout_options(&self, mode: EnsembleMode, record: bool) -> RolloutOptions {
        RolloutOptions {
            depth: self.config.depth,
            encoding: self.network.encoding,
            mode,
            record,
        }
    }

    /// Rolls out one sampled episode with the current parameters.
    pub fn rollout(&self, seed: u64) -> Result<Episode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut world = GridWorld::new(self.scenario.clone(), &mut rng)?;
        let opts = self.rollout_options(EnsembleMode::Sample, true);
        run_episode(&mut world, &self.policies(), &opts, &mut rng)
    }

    /// Gradients of every trained team over a recorded episode.
    pub fn gradients(&self, episode: &Episode) -> Result<Vec<Option<TeamGrads>>> {
        self.learners
            .iter()
            .enumerate()
            .map(|(t, l)| l.as_ref().map(|l| self.team_gradients(episode, t as u8, l, None)).transpose())
            .collect()
    }

    fn team_gradients(&self, episode: &Episode, team: u8, l: &TeamLearner, step: Option<usize>) -> Result<TeamGrads> {
        let gamma = self.config.gamma;
        match (&self.policy_net, self.config.algorithm) {
            (PolicyNet::Mlp(net), _) => vanilla_pg_gradients(episode, team, (net, &l.policy), gamma),
            (PolicyNet::Graph(net), Algorithm::GraphAc) => {
                let critic_net = self.critic_net.as_ref().ok_or(Error::Config("missing critic".into()))?;
                let critic = l.critic.as_ref().ok_or(Error::Config("missing critic parameters".into()))?;
                match step {
                    Some(t) => ac_step_gradients(episode, t, team, (net, &l.policy), (critic_net, critic), gamma),
                    None => ac_gradients(episode, team, (net, &l.policy), (critic_net, critic), gamma),
                }
            }
            (PolicyNet::Graph(net), _) => graph_pg_gradients(episode, team, (net, &l.policy), gamma),
        }
    }

    /// Rollout plus gradients for episode `episode` of batch `batch`. Reads
    /// parameters only, so episodes of one batch may run in parallel.
    pub fn run_training_episode(&self, batch: u64, episode: u64) -> Result<EpisodeResult> {
        let ep = self.rollout(self.episode_seed(batch, episode))?;
        Ok(EpisodeResult {
            grads: self.gradients(&ep)?,
            stats: ep.stats,
        })
    }

    /// Averages per-episode gradients in the given order, takes one Adam
    /// step per trained team and updates the plateau schedules.
    pub fn apply_batch(&mut self, results: Vec<EpisodeResult>) -> Result<BatchSummary> {
        if results.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let scale = 1.0 / results.len() as f64;
        for (t, learner) in self.learners.iter_mut().enumerate() {
            let Some(learner) = learner else { continue };
            let mut total: Option<TeamGrads> = None;
            for r in &results {
                let g = r.grads[t].as_ref().ok_or(Error::Config("missing team gradients".into()))?;
                match &mut total {
                    None => total = Some(g.clone()),
                    Some(acc) => acc.add_assign(g)?,
                }
            }
            let mut total = total.expect("non-empty batch");
            total.scale(scale);
            apply_grads(learner, &total)?;
        }
        let stats: Vec<EpisodeStats> = results.into_iter().map(|r| r.stats).collect();
        Ok(self.finish_batch(&stats))
    }

    fn finish_batch(&mut self, stats: &[EpisodeStats]) -> BatchSummary {
        let mut summary = summarize(self.batches_done, stats);
        for (ts, learner) in summary.teams.iter_mut().zip(self.learners.iter_mut()) {
            if let Some(l) = learner {
                let before = l.policy_adam.learning_rate;
                let after = l.schedule.update(ts.mean_reward, before);
                if after != before {
                    l.policy_adam.learning_rate = after;
                    if let Some(c) = &mut l.critic_adam {
                        c.learning_rate *= l.schedule.factor;
                    }
                }
                ts.lr = Some(after);
            }
        }
        self.batches_done += 1;
        summary
    }

    /// One batch of `batch_episodes` episodes, run sequentially.
    pub fn train_batch(&mut self) -> Result<BatchSummary> {
        let batch = self.batches_done;
        let n = self.config.batch_episodes as u64;
        match self.config.update {
            UpdateTiming::Batch => {
                let results = (0..n)
                    .map(|e| self.run_training_episode(batch, e))
                    .collect::<Result<Vec<_>>>()?;
                self.apply_batch(results)
            }
            UpdateTiming::Step => {
                let mut stats = Vec::new();
                for e in 0..n {
                    let ep = self.rollout(self.episode_seed(batch, e))?;
                    for t in 0..ep.steps.len() {
                        for team in 0..self.learners.len() {
                            let Some(l) = &self.learners[team] else { continue };
                            let g = self.team_gradients(&ep, team as u8, l, Some(t))?;
                            let l = self.learners[team].as_mut().expect("checked above");
                            apply_grads(l, &g)?;
                        }
                    }
                    stats.push(ep.stats);
                }
                Ok(self.finish_batch(&stats))
            }
        }
    }

    /// Frozen-policy episodes with argmax ensembling on `scenario`. Untrained
    /// teams act uniformly; with `uniform_opponents` every team but team 0 does.
    pub fn evaluate(
        &self,
        scenario: &ScenarioConfig,
        episodes: usize,
        seed: u64,
        uniform_opponents: bool,
    ) -> Result<Vec<EpisodeStats>> {
        scenario.validate()?;
        if scenario.num_teams() != self.learners.len() {
            return Err(Error::Config("evaluation scenario has a different team count".into()));
        }
        let mut policies = self.policies();
        if uniform_opponents {
            for p in policies.iter_mut().skip(1) {
                *p = TeamPolicy::Uniform;
            }
        }
        let opts = self.rollout_options(EnsembleMode::Argmax, false);
        (0..episodes as u64)
            .map(|e| {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed) ^ e));
                let mut world = GridWorld::new(scenario.clone(), &mut rng)?;
                run_episode(&mut world, &policies, &opts, &mut rng).map(|ep| ep.stats)
            })
            .collect()
    }
}

fn apply_grads(l: &mut TeamLearner, g: &TeamGrads) -> Result<()> {
    adam_step(&mut l.policy, &g.policy, &mut l.policy_adam)?;
    match (&mut l.critic, &mut l.critic_adam, &g.critic) {
        (Some(p), Some(st), Some(gc)) => adam_step(p, gc, st),
        (None, _, None) => Ok(()),
        _ => Err(Error::Config("critic parameters and gradients disagree".into())),
    }
}

/// Per-team means over a set of episodes.
pub fn summarize(batch: u64, stats: &[EpisodeStats]) -> BatchSummary {
    let n = stats.len().max(1) as f64;
    let teams = stats
        .first()
        .map(|s| s.teams.len())
        .unwrap_or(0);
    let teams = (0..teams)
        .map(|t| {
            let wins: Vec<f64> = stats.iter().filter_map(|s| s.teams[t].win).collect();
            TeamSummary {
                team: t as u8,
                mean_reward: stats.iter().map(|s| s.teams[t].mean_return).sum::<f64>() / n,
                win_rate: (!wins.is_empty()).then(|| wins.iter().sum::<f64>() / wins.len() as f64),
                lr: None,
                mean_alive: stats.iter().map(|s| s.teams[t].alive as f64).sum::<f64>() / n,
            }
        })
        .collect();
    let subgraphs: usize = stats.iter().map(|s| s.subgraphs).sum();
    let members: usize = stats.iter().map(|s| s.member_total).sum();
    BatchSummary {
        batch,
        episodes: stats.len(),
        teams,
        subgraphs,
        mean_subgraph_size: if subgraphs == 0 { 0.0 } else { members as f64 / subgraphs as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_episodes_and_batches() {
        let t = Trainer::new(
            ScenarioConfig::jungle(8, 8, 3, 2),
            TrainerConfig::default(),
            NetworkConfig {
                hidden: 4,
                ..NetworkConfig::default()
            },
            &[true],
            7,
        )
        .unwrap();
        assert_ne!(t.episode_seed(0, 0), t.episode_seed(0, 1));
        assert_ne!(t.episode_seed(0, 1), t.episode_seed(1, 0));
    }
}
