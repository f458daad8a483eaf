//! Rollouts, ensembling, and the actor-critic and policy-gradient updates.

use alloc::vec::Vec;

use rand::Rng;

use crate::graph::SubGraph;
use crate::gridworld::{Action, AgentId};
use crate::nn::{MessagePassingNet, Params, Tape};
use crate::{Error, Result};

mod episode;
mod trainer;
mod update;

pub use episode::{
    run_episode, run_episode_observed, Episode, EpisodeStats, EpisodeStep, RolloutOptions, TeamPolicy, TeamStats,
    Transition,
};
pub use trainer::{
    summarize, BatchSummary, EpisodeResult, NetworkConfig, PolicyNet, TeamLearner, TeamSummary, Trainer,
};
pub use update::{
    ac_gradients, ac_step_gradients, graph_pg_gradients, transition_returns, vanilla_pg_gradients, TeamGrads,
};

/// Categorical distribution over the five actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution(pub [f64; Action::COUNT]);

impl ActionDistribution {
    pub fn uniform() -> Self {
        Self([1.0 / Action::COUNT as f64; Action::COUNT])
    }

    pub fn from_log_probs(logp: &[f64]) -> Self {
        let mut p = [0.0; Action::COUNT];
        for (o, l) in p.iter_mut().zip(logp) {
            *o = libm::exp(*l);
        }
        Self(p)
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.0[a.index()]
    }

    /// Highest-probability action, lowest index on ties.
    pub fn argmax(&self) -> Action {
        let mut best = 0;
        for k in 1..Action::COUNT {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        Action::ALL[best]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let total: f64 = self.0.iter().sum();
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = Action::Idle;
        for (k, p) in self.0.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = Action::ALL[k];
            if u < acc {
                return last;
            }
        }
        last
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    Sample,
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// REINFORCE on a per-agent perceptron, no graph.
    VanillaPg,
    /// REINFORCE on the message-passing policy with ensembling.
    GraphPg,
    /// Sub-graph actor-critic with the per-agent baseline sweep.
    GraphAc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateTiming {
    /// Accumulate over the batch, one optimiser step per batch.
    Batch,
    /// One optimiser step per environment step.
    Step,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub depth: usize,
    pub batch_episodes: usize,
    pub algorithm: Algorithm,
    pub update: UpdateTiming,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr_policy: 0.01,
            lr_critic: 0.01,
            depth: 3,
            batch_episodes: 100,
            algorithm: Algorithm::GraphAc,
            update: UpdateTiming::Batch,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if !(self.lr_policy > 0.0) || !(self.lr_critic > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.batch_episodes == 0 {
            return Err(Error::Config("batch_episodes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean of the distributions, renormalised.
pub fn ensemble_distribution(dists: &[ActionDistribution]) -> Result<ActionDistribution> {
    if dists.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut acc = [0.0; Action::COUNT];
    for d in dists {
        for (a, p) in acc.iter_mut().zip(d.0) {
            *a += p;
        }
    }
    let total: f64 = acc.iter().sum();
    for a in &mut acc {
        *a /= total;
    }
    Ok(ActionDistribution(acc))
}

/// Action of one agent from the policies of every sub-graph containing it.
pub fn ensemble_action<R: Rng + ?Sized>(
    dists: &[ActionDistribution],
    mode: EnsembleMode,
    rng: &mut R,
) -> Result<Action> {
    let mean = ensemble_distribution(dists)?;
    Ok(match mode {
        EnsembleMode::Sample => mean.sample(rng),
        EnsembleMode::Argmax => mean.argmax(),
    })
}

/// `r + gamma * v_next - v`.
pub fn td_error(reward: f64, v_next: f64, v: f64, gamma: f64) -> f64 {
    reward + gamma * v_next - v
}

/// Discounted return-to-go: `G[t] = rewards[t] + gamma * G[t + 1]`.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

/// Critic sweep over one member's action with the other members' actions
/// fixed: `sum_a pi(a) * q(joint with member <- a)`.
///
/// `base_q` is `q(joint)` when already known; it is reused for the slot
/// that matches the member's own action.
pub fn baseline_with_probs(
    tape: &mut Tape,
    critic: &MessagePassingNet,
    params: &Params,
    sg: &SubGraph,
    joint: &[Action],
    member: usize,
    probs: &ActionDistribution,
    base_q: Option<f64>,
) -> Result<f64> {
    if member >= sg.len() {
        return Err(Error::MemberNotFound(AgentId::MAX));
    }
    let mut actions = joint.to_vec();
    let mut v = 0.0;
    for a in Action::ALL {
        let p = probs.prob(a);
        let q = match base_q {
            Some(q) if a == joint[member] => q,
            _ => {
                actions[member] = a;
                critic.critic_forward_with(tape, params, sg, &actions)?
            }
        };
        v += p * q;
    }
    Ok(v)
}

/// Baseline for `agent` in `sg` under the current policy and critic.
/// Exactly five critic evaluations.
pub fn baseline(
    sg: &SubGraph,
    joint: &[Action],
    agent: AgentId,
    policy: (&MessagePassingNet, &Params),
    critic: (&MessagePassingNet, &Params),
) -> Result<f64> {
    let member = sg.member_index(agent).ok_or(Error::MemberNotFound(agent))?;
    let dists = policy.0.policy_forward(policy.1, sg)?;
    let mut tape = Tape::new();
    baseline_with_probs(&mut tape, critic.0, critic.1, sg, joint, member, &dists[member], None)
}
